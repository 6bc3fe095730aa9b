//! First-order optimizers over flat parameter vectors.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Gradient descent with heavy-ball momentum.
    Momentum { momentum: f64 },
    /// Adaptive moments.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn momentum() -> Self {
        OptimizerKind::Momentum { momentum: 0.9 }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, dim: usize) -> Self {
        let v_len = match kind {
            OptimizerKind::Momentum { .. } => 0,
            OptimizerKind::Adam { .. } => dim,
        };
        Optimizer {
            kind,
            lr,
            m: vec![0.0; dim],
            v: vec![0.0; v_len],
            step: 0,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// In-place parameter update from the gradient.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        match self.kind {
            OptimizerKind::Momentum { momentum } => {
                for i in 0..params.len() {
                    self.m[i] = momentum * self.m[i] + grad[i];
                    params[i] -= self.lr * self.m[i];
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.step as i32);
                let bc2 = 1.0 - beta2.powi(self.step as i32);
                for i in 0..params.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let mh = self.m[i] / bc1;
                    let vh = self.v[i] / bc2;
                    params[i] -= self.lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_descends_quadratic() {
        let mut params = vec![3.0, -2.0];
        let mut opt = Optimizer::new(OptimizerKind::momentum(), 0.05, 2);
        for _ in 0..500 {
            let grad: Vec<f64> = params.iter().map(|&x| 2.0 * x).collect();
            opt.apply(&mut params, &grad);
        }
        assert!(params.iter().all(|x| x.abs() < 1e-3), "{params:?}");
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut params = vec![3.0, -2.0];
        let mut opt = Optimizer::new(OptimizerKind::adam(), 0.05, 2);
        for _ in 0..2000 {
            let grad: Vec<f64> = params.iter().map(|&x| 2.0 * x).collect();
            opt.apply(&mut params, &grad);
        }
        assert!(params.iter().all(|x| x.abs() < 1e-3));
    }
}
