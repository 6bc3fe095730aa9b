//! Gradient-descent fitting of a density field to ray supervision.
//!
//! Targets are opacity and expected depth computed by fine quadrature of an
//! analytic scene opacity; the loss is the batch-mean squared error on both.

use super::render::{render_sigma, Ray, DEPTH_ALPHA_FLOOR};
use super::{DensityField, FieldConfig, SigmaTrace};
use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};
use crate::optim::{Optimizer, OptimizerKind};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Material opacity (per meter) of an analytic scene.
pub trait OpacityModel: Sync {
    fn opacity(&self, p: Vec3) -> f64;
}

impl<F: Fn(Vec3) -> f64 + Sync> OpacityModel for F {
    fn opacity(&self, p: Vec3) -> f64 {
        self(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub iterations: usize,
    pub batch_rays: usize,
    /// Quadrature samples per ray during fitting.
    pub n_samples: usize,
    /// Fine quadrature samples for the ground-truth targets.
    pub gt_samples: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Weight of the expected-depth term.
    pub depth_weight: f64,
    /// Rays with ground-truth alpha below this get no depth supervision.
    pub depth_alpha_mask: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 3000,
            batch_rays: 64,
            n_samples: 96,
            gt_samples: 1024,
            learning_rate: 0.02,
            optimizer: OptimizerKind::momentum(),
            depth_weight: 0.5,
            depth_alpha_mask: 0.05,
            seed: 0,
        }
    }
}

/// One supervised ray: the clipped ray plus its analytic targets.
#[derive(Clone, Copy, Debug)]
pub struct RaySupervision {
    pub ray: Ray,
    pub alpha: f64,
    pub depth: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Batch loss sampled every few iterations, for monitoring.
    pub loss_curve: Vec<f64>,
    pub rays_used: usize,
}

/// Rays from viewpoints on the upper hemisphere around the box, each aimed at
/// a random point inside it. Deterministic given the seed.
pub fn hemisphere_rays(bbox: Aabb, count: usize, seed: u64) -> Vec<Ray> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = bbox.center();
    let radius = bbox.diagonal();
    let mut rays = Vec::with_capacity(count);
    while rays.len() < count {
        // Uniform direction, folded to the upper hemisphere and kept away
        // from grazing angles.
        let z: f64 = rng.gen_range(-1.0..1.0);
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let dir = Vec3::new(
            (1.0 - z * z).max(0.0).sqrt() * theta.cos(),
            (1.0 - z * z).max(0.0).sqrt() * theta.sin(),
            z.abs().max(0.15),
        )
        .normalized();
        let eye = center + dir * radius;
        let ext = bbox.extent();
        let target = Vec3::new(
            bbox.min.x + rng.gen_range(0.05..0.95) * ext.x,
            bbox.min.y + rng.gen_range(0.05..0.95) * ext.y,
            bbox.min.z + rng.gen_range(0.05..0.95) * ext.z,
        );
        let Some(d) = (target - eye).try_normalized() else {
            continue;
        };
        if let Ok(ray) = Ray::new(eye, d, 0.0, 3.0 * radius) {
            rays.push(ray);
        }
    }
    rays
}

/// Clip rays to the box and compute their analytic targets.
pub fn supervise_rays(
    scene: &dyn OpacityModel,
    bbox: Aabb,
    rays: &[Ray],
    gt_samples: usize,
) -> Vec<RaySupervision> {
    rays.par_iter()
        .map(|ray| {
            bbox.clip_ray(ray.origin, ray.direction, ray.t_near, ray.t_far)
                .map(|(lo, hi)| {
                    // Pull endpoints inward so sample midpoints never land
                    // outside the box through rounding.
                    let eps = 1e-9 * (hi - lo).max(1.0);
                    let clipped = Ray {
                        t_near: lo + eps,
                        t_far: hi - eps,
                        ..*ray
                    };
                    let gt = render_sigma(|p| scene.opacity(p), &clipped, gt_samples);
                    RaySupervision {
                        ray: clipped,
                        alpha: gt.alpha,
                        depth: gt.expected_depth,
                    }
                })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

struct TrainRender {
    traces: Vec<SigmaTrace>,
    sigmas: Vec<f64>,
    t_mids: Vec<f64>,
    /// Transmittance before each segment.
    t_before: Vec<f64>,
    /// Per-segment transparency exp(-sigma dt).
    seg_trans: Vec<f64>,
    dt: f64,
    alpha: f64,
    depth: f64,
}

fn render_train(field: &DensityField, ray: &Ray, n_samples: usize) -> TrainRender {
    let dt = (ray.t_far - ray.t_near) / n_samples as f64;
    let mut traces = Vec::with_capacity(n_samples);
    let mut sigmas = Vec::with_capacity(n_samples);
    let mut t_mids = Vec::with_capacity(n_samples);
    let mut t_before = Vec::with_capacity(n_samples);
    let mut seg_trans = Vec::with_capacity(n_samples);
    let mut transmittance = 1.0;
    let mut weighted_depth = 0.0;
    for i in 0..n_samples {
        let t = ray.t_near + (i as f64 + 0.5) * dt;
        let trace = field
            .sigma_trace(ray.at(t))
            .expect("supervised rays stay inside the field box");
        let sigma = super::softplus(trace.pre_out);
        let trans = (-sigma * dt).exp();
        t_before.push(transmittance);
        weighted_depth += transmittance * (1.0 - trans) * t;
        transmittance *= trans;
        traces.push(trace);
        sigmas.push(sigma);
        t_mids.push(t);
        seg_trans.push(trans);
    }
    let alpha = 1.0 - transmittance;
    TrainRender {
        traces,
        sigmas,
        t_mids,
        t_before,
        seg_trans,
        dt,
        alpha,
        depth: weighted_depth / alpha.max(DEPTH_ALPHA_FLOOR),
    }
}

fn ray_loss(render: &TrainRender, sup: &RaySupervision, cfg: &FitConfig) -> f64 {
    let da = render.alpha - sup.alpha;
    let mut loss = da * da;
    if sup.alpha > cfg.depth_alpha_mask {
        let dd = render.depth - sup.depth;
        loss += cfg.depth_weight * dd * dd;
    }
    loss
}

/// Gradient of one ray's loss, accumulated into sparse table and dense tail
/// buffers. `scale` is the weight of this ray in the batch mean.
fn ray_backward(
    field: &DensityField,
    render: &TrainRender,
    sup: &RaySupervision,
    cfg: &FitConfig,
    scale: f64,
    table_grad: &mut Vec<(u32, f64)>,
    rest_grad: &mut [f64],
) {
    let n = render.sigmas.len();
    let dt = render.dt;
    let t_final = 1.0 - render.alpha;
    let d_alpha = 2.0 * (render.alpha - sup.alpha) * scale;
    let depth_active = sup.alpha > cfg.depth_alpha_mask;
    let d_depth = if depth_active {
        2.0 * cfg.depth_weight * (render.depth - sup.depth) * scale
    } else {
        0.0
    };
    let a_max = render.alpha.max(DEPTH_ALPHA_FLOOR);
    let s_weighted: f64 = (0..n)
        .map(|i| render.t_before[i] * (1.0 - render.seg_trans[i]) * render.t_mids[i])
        .sum();
    // Suffix sums of t_i * w_i for the depth derivative.
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] =
            suffix[i + 1] + render.t_mids[i] * render.t_before[i] * (1.0 - render.seg_trans[i]);
    }
    for j in 0..n {
        // d alpha / d sigma_j
        let da_ds = dt * t_final;
        let mut d_sigma = d_alpha * da_ds;
        if depth_active {
            let ds_dsj =
                render.t_mids[j] * render.t_before[j] * dt * render.seg_trans[j] - dt * suffix[j + 1];
            let damax_dsj = if render.alpha > DEPTH_ALPHA_FLOOR { da_ds } else { 0.0 };
            let dd_dsj = (ds_dsj * a_max - s_weighted * damax_dsj) / (a_max * a_max);
            d_sigma += d_depth * dd_dsj;
        }
        field.backward_sigma(&render.traces[j], d_sigma, table_grad, rest_grad);
    }
}

pub(crate) struct BatchGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Loss and full flat gradient of a batch; arithmetic is identical for any
/// worker count because chunk boundaries and the merge order are fixed.
pub(crate) fn batch_loss_and_grad(
    field: &DensityField,
    supervision: &[RaySupervision],
    batch: &[usize],
    cfg: &FitConfig,
) -> BatchGrad {
    const RAY_CHUNK: usize = 4;
    let layout = field.layout();
    let rest_len = layout.total - layout.tables_len;
    let scale = 1.0 / batch.len() as f64;
    let chunks: Vec<&[usize]> = batch.chunks(RAY_CHUNK).collect();
    let partials: Vec<(f64, Vec<(u32, f64)>, Vec<f64>)> = chunks
        .par_iter()
        .map(|chunk| {
            let mut loss = 0.0;
            let mut table = Vec::new();
            let mut rest = vec![0.0; rest_len];
            for &ray_idx in *chunk {
                let sup = &supervision[ray_idx];
                let render = render_train(field, &sup.ray, cfg.n_samples);
                loss += ray_loss(&render, sup, cfg) * scale;
                ray_backward(field, &render, sup, cfg, scale, &mut table, &mut rest);
            }
            (loss, table, rest)
        })
        .collect();
    let mut grad = vec![0.0; layout.total];
    let mut loss = 0.0;
    for (chunk_loss, table, rest) in partials {
        loss += chunk_loss;
        for (idx, v) in table {
            grad[layout.tables + idx as usize] += v;
        }
        for (i, v) in rest.into_iter().enumerate() {
            grad[layout.tables_len + i] += v;
        }
    }
    BatchGrad { loss, grad }
}

pub(crate) fn eval_loss(
    field: &DensityField,
    supervision: &[RaySupervision],
    batch: &[usize],
    cfg: &FitConfig,
) -> f64 {
    let scale = 1.0 / batch.len() as f64;
    batch
        .par_iter()
        .map(|&i| {
            let sup = &supervision[i];
            let render = render_train(field, &sup.ray, cfg.n_samples);
            ray_loss(&render, sup, cfg) * scale
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

/// Fit a density field to the scene's analytic opacity along the given rays.
pub fn fit_field(
    scene: &dyn OpacityModel,
    bbox: Aabb,
    rays: &[Ray],
    field_cfg: FieldConfig,
    cfg: &FitConfig,
) -> Result<(DensityField, FitReport)> {
    let supervision = supervise_rays(scene, bbox, rays, cfg.gt_samples);
    if supervision.is_empty() {
        return Err(Error::InvalidScene("no rays intersect the scene box".into()));
    }
    let mut field = DensityField::new(field_cfg, bbox)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, field.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let eval_set: Vec<usize> = {
        let mut ids: Vec<usize> = (0..supervision.len()).collect();
        ids.shuffle(&mut rng);
        ids.truncate(256.min(supervision.len()));
        ids
    };
    let initial_loss = eval_loss(&field, &supervision, &eval_set, cfg);
    let mut loss_curve = Vec::new();

    for iter in 0..cfg.iterations {
        let batch: Vec<usize> = (0..cfg.batch_rays)
            .map(|_| rng.gen_range(0..supervision.len()))
            .collect();
        let BatchGrad { loss, grad } = batch_loss_and_grad(&field, &supervision, &batch, cfg);
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss at iteration {iter}"
            )));
        }
        if iter % 50 == 0 {
            loss_curve.push(loss);
        }
        opt.apply(field.params_mut(), &grad);
    }

    let final_loss = eval_loss(&field, &supervision, &eval_set, cfg);
    if !final_loss.is_finite() {
        return Err(Error::Diverged("non-finite final loss".into()));
    }
    if final_loss >= initial_loss {
        return Err(Error::Diverged(format!(
            "loss did not decrease: {initial_loss} -> {final_loss}"
        )));
    }
    Ok((
        field,
        FitReport {
            initial_loss,
            final_loss,
            loss_curve,
            rays_used: supervision.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> (FieldConfig, FitConfig) {
        let field_cfg = FieldConfig {
            levels: 4,
            features: 2,
            table_size_log2: 10,
            coarse_resolution: 4,
            fine_resolution: 24,
            hidden: 12,
            sigma_bias: -2.0,
            init_seed: 1,
        };
        let fit_cfg = FitConfig {
            iterations: 400,
            batch_rays: 32,
            n_samples: 48,
            gt_samples: 512,
            learning_rate: 0.05,
            ..FitConfig::default()
        };
        (field_cfg, fit_cfg)
    }

    fn unit_box() -> Aabb {
        Aabb::new(Vec3::ZERO, Vec3::splat(1.0))
    }

    #[test]
    fn empty_scene_fits_to_transparent() {
        let (field_cfg, fit_cfg) = small_cfg();
        let rays = hemisphere_rays(unit_box(), 512, 3);
        let (field, report) =
            fit_field(&|_p: Vec3| 0.0, unit_box(), &rays, field_cfg, &fit_cfg).unwrap();
        assert!(report.final_loss < report.initial_loss);
        let held_out = hemisphere_rays(unit_box(), 64, 99);
        for ray in &held_out {
            let r = super::super::render_ray(&field, &ray, 128).unwrap();
            assert!(r.alpha < 0.01, "alpha {} on held-out ray", r.alpha);
        }
    }

    #[test]
    fn opaque_slab_alpha_close_to_truth() {
        let (field_cfg, mut fit_cfg) = small_cfg();
        fit_cfg.iterations = 1200;
        // Slab z in [0.3, 0.45] with strong opacity.
        let slab = |p: Vec3| {
            if p.z >= 0.3 && p.z <= 0.45 {
                60.0
            } else {
                0.0
            }
        };
        let rays = hemisphere_rays(unit_box(), 2048, 5);
        let (field, _) = fit_field(&slab, unit_box(), &rays, field_cfg, &fit_cfg).unwrap();
        let held_out = hemisphere_rays(unit_box(), 48, 123);
        let sup = supervise_rays(&slab, unit_box(), &held_out, 4096);
        let mut worst = 0.0f64;
        for s in &sup {
            let r = super::super::render_ray(&field, &s.ray, 256).unwrap();
            worst = worst.max((r.alpha - s.alpha).abs());
        }
        assert!(worst < 0.05, "worst held-out alpha error {worst}");
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (field_cfg, fit_cfg) = small_cfg();
        let slab = |p: Vec3| if p.z < 0.4 { 12.0 } else { 0.2 };
        let rays = hemisphere_rays(unit_box(), 64, 7);
        let supervision = supervise_rays(&slab, unit_box(), &rays, 256);
        let mut field = DensityField::new(field_cfg, unit_box()).unwrap();
        let batch: Vec<usize> = (0..8).collect();
        let analytic = batch_loss_and_grad(&field, &supervision, &batch, &fit_cfg);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layout = field.layout();
        let mut checked = 0;
        let mut tried = 0;
        while checked < 64 && tried < 4000 {
            tried += 1;
            // Mix of table entries and decoder parameters.
            let idx = if tried % 2 == 0 {
                rng.gen_range(0..layout.tables_len)
            } else {
                rng.gen_range(layout.tables_len..layout.total)
            };
            if analytic.grad[idx].abs() < 1e-7 {
                continue; // untouched table rows carry no signal
            }
            let h = 1e-6 * field.params()[idx].abs().max(1.0);
            let orig = field.params()[idx];
            field.params_mut()[idx] = orig + h;
            let lp = eval_loss(&field, &supervision, &batch, &fit_cfg);
            field.params_mut()[idx] = orig - h;
            let lm = eval_loss(&field, &supervision, &batch, &fit_cfg);
            field.params_mut()[idx] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - analytic.grad[idx]).abs() / analytic.grad[idx].abs().max(1e-12);
            assert!(
                rel < 1e-4,
                "param {idx}: analytic {} vs fd {} (rel {rel})",
                analytic.grad[idx],
                fd
            );
            checked += 1;
        }
        assert!(checked >= 64, "only {checked} parameters checked");
    }

    #[test]
    fn fitting_is_deterministic_across_worker_counts() {
        let (field_cfg, mut fit_cfg) = small_cfg();
        fit_cfg.iterations = 30;
        let slab = |p: Vec3| if p.z < 0.3 { 20.0 } else { 0.0 };
        let rays = hemisphere_rays(unit_box(), 256, 13);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let (field, _) =
                    fit_field(&slab, unit_box(), &rays, field_cfg, &fit_cfg).unwrap();
                field.params().to_vec()
            })
        };
        let single = run(1);
        let multi = run(4);
        assert_eq!(single, multi);
    }
}
