//! Shape-prior auto-decoder: a latent-conditioned SDF network trained on the
//! procedural family, plus latent inference from partial clouds and dense
//! surface reconstruction.

mod marching;
mod tables;

pub use marching::{largest_component, marching_cubes, ScalarGrid};

use crate::error::{Error, Result};
use crate::cloud::PointCloud;
use crate::math::{Aabb, Vec3};
use crate::mesh::TriangleMesh;
use crate::optim::{Optimizer, OptimizerKind};
use crate::shapes::{sample_surface, sdf_eval, SdfSample, ShapeKind, ShapeSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Canonical frame box that contains every training shape with margin.
pub fn canonical_bounds() -> Aabb {
    Aabb::new(Vec3::new(-0.13, -0.13, -0.03), Vec3::new(0.13, 0.13, 0.16))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    /// Input positions are multiplied by this to a ~unit range.
    pub position_scale: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            latent_dim: 64,
            hidden: vec![256, 256, 256, 256],
            position_scale: 8.0,
        }
    }
}

impl DecoderConfig {
    /// A small architecture for quick experiments and tests.
    pub fn compact() -> Self {
        DecoderConfig {
            latent_dim: 16,
            hidden: vec![64, 64, 64],
            position_scale: 8.0,
        }
    }

    fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.latent_dim + 3];
        dims.extend(&self.hidden);
        dims.push(1);
        dims
    }

    fn param_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// One latent code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    pub z: Vec<f64>,
}

/// Latent-conditioned SDF decoder with the training latent table.
#[derive(Clone, Debug)]
pub struct SdfDecoder {
    cfg: DecoderConfig,
    params: Vec<f64>,
    latents: Vec<Vec<f64>>,
    pub label: String,
}

struct DecoderTrace {
    /// acts[0] is the input; acts[i] the post-activation of layer i.
    acts: Vec<Vec<f64>>,
}

impl SdfDecoder {
    fn init(cfg: DecoderConfig, n_shapes: usize, seed: u64, latent_sigma: f64) -> SdfDecoder {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = cfg.dims();
        let mut params = Vec::with_capacity(cfg.param_count());
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.gen_range(-s..s));
            }
            for _ in 0..fan_out {
                params.push(0.0);
            }
        }
        let latents = (0..n_shapes)
            .map(|_| {
                (0..cfg.latent_dim)
                    .map(|_| gaussian(&mut rng) * latent_sigma)
                    .collect()
            })
            .collect();
        SdfDecoder {
            cfg,
            params,
            latents,
            label: String::new(),
        }
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    pub fn latent_count(&self) -> usize {
        self.latents.len()
    }

    pub fn training_latent(&self, shape: usize) -> LatentCode {
        LatentCode {
            z: self.latents[shape].clone(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn input(&self, z: &[f64], x: Vec3) -> Vec<f64> {
        let mut input = Vec::with_capacity(z.len() + 3);
        input.extend_from_slice(z);
        input.push(x.x * self.cfg.position_scale);
        input.push(x.y * self.cfg.position_scale);
        input.push(x.z * self.cfg.position_scale);
        input
    }

    fn forward_trace(&self, z: &[f64], x: Vec3) -> DecoderTrace {
        let dims = self.cfg.dims();
        let mut acts = Vec::with_capacity(dims.len());
        acts.push(self.input(z, x));
        let mut offset = 0;
        for (li, w) in dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let last = li == dims.len() - 2;
            let prev = &acts[li];
            let mut out = vec![0.0; n_out];
            for (j, o) in out.iter_mut().enumerate() {
                let mut acc = self.params[offset + n_in * n_out + j]; // bias
                let row = offset + j * n_in;
                for (i, &p) in prev.iter().enumerate() {
                    acc += self.params[row + i] * p;
                }
                *o = if last { acc } else { acc.tanh() };
            }
            acts.push(out);
            offset += n_in * n_out + n_out;
        }
        DecoderTrace { acts }
    }

    /// Predicted signed distance for a latent code at a point.
    pub fn predict(&self, z: &[f64], x: Vec3) -> f64 {
        self.forward_trace(z, x).acts.last().unwrap()[0]
    }

    /// Backprop d_out into parameter gradients and (optionally) the latent
    /// gradient.
    fn backward(
        &self,
        trace: &DecoderTrace,
        d_out: f64,
        grad_params: Option<&mut [f64]>,
        grad_latent: Option<&mut [f64]>,
    ) {
        let dims = self.cfg.dims();
        let mut offsets = Vec::with_capacity(dims.len() - 1);
        let mut offset = 0;
        for w in dims.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut d_act = vec![d_out];
        let mut grad_params = grad_params;
        for li in (0..dims.len() - 1).rev() {
            let (n_in, n_out) = (dims[li], dims[li + 1]);
            let w_off = offsets[li];
            let b_off = w_off + n_in * n_out;
            let prev = &trace.acts[li];
            let cur = &trace.acts[li + 1];
            let last = li == dims.len() - 2;
            // d pre-activation
            let d_pre: Vec<f64> = (0..n_out)
                .map(|j| {
                    if last {
                        d_act[j]
                    } else {
                        d_act[j] * (1.0 - cur[j] * cur[j])
                    }
                })
                .collect();
            let mut d_prev = vec![0.0; n_in];
            for j in 0..n_out {
                let row = w_off + j * n_in;
                if let Some(g) = grad_params.as_deref_mut() {
                    g[b_off + j] += d_pre[j];
                    for i in 0..n_in {
                        g[row + i] += d_pre[j] * prev[i];
                    }
                }
                for i in 0..n_in {
                    d_prev[i] += d_pre[j] * self.params[row + i];
                }
            }
            d_act = d_prev;
        }
        if let Some(gz) = grad_latent {
            for (g, d) in gz.iter_mut().zip(&d_act) {
                *g += d;
            }
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Seeded jittered shape family of one kind, height-normalized to `h_std` so
/// every training shape sits in the canonical frame.
pub fn training_family(kind: ShapeKind, count: usize, seed: u64, h_std: f64) -> Vec<ShapeSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut family = Vec::with_capacity(count);
    while family.len() < count {
        let j = |rng: &mut ChaCha8Rng| rng.gen_range(0.8..1.2);
        let candidate = match kind {
            ShapeKind::Cylindrical => ShapeSpec::CylindricalCup {
                radius: 0.035 * j(&mut rng),
                height: 0.105 * j(&mut rng),
                wall: Some(0.003 * j(&mut rng)),
            },
            ShapeKind::Prismatic => ShapeSpec::PrismaticCup {
                sides: [4u32, 6, 8][rng.gen_range(0..3)],
                apothem: 0.034 * j(&mut rng),
                height: 0.10 * j(&mut rng),
                wall: 0.0035 * j(&mut rng),
            },
            ShapeKind::Mug => ShapeSpec::Mug {
                radius: 0.04 * j(&mut rng),
                height: 0.095 * j(&mut rng),
                wall: 0.0035 * j(&mut rng),
                handle_major: 0.03 * j(&mut rng),
                handle_minor: 0.008 * j(&mut rng),
            },
        };
        let scale = h_std / candidate.height();
        let scaled = match candidate {
            ShapeSpec::CylindricalCup { radius, height, wall } => ShapeSpec::CylindricalCup {
                radius: radius * scale,
                height: height * scale,
                wall: wall.map(|w| w * scale),
            },
            ShapeSpec::PrismaticCup {
                sides,
                apothem,
                height,
                wall,
            } => ShapeSpec::PrismaticCup {
                sides,
                apothem: apothem * scale,
                height: height * scale,
                wall: wall * scale,
            },
            ShapeSpec::Mug {
                radius,
                height,
                wall,
                handle_major,
                handle_minor,
            } => ShapeSpec::Mug {
                radius: radius * scale,
                height: height * scale,
                wall: wall * scale,
                handle_major: handle_major * scale,
                handle_minor: handle_minor * scale,
            },
        };
        if scaled.validate().is_ok() {
            family.push(scaled);
        }
    }
    family
}

#[derive(Clone, Debug)]
pub struct ShapeSamples {
    pub spec: ShapeSpec,
    pub samples: Vec<SdfSample>,
}

#[derive(Clone, Debug)]
pub struct PriorDataset {
    pub shapes: Vec<ShapeSamples>,
}

/// Fraction of samples drawn near the surface; the rest are uniform in the
/// canonical box.
const NEAR_SURFACE_FRACTION: f64 = 0.9;
const NEAR_SIGMA_TIGHT: f64 = 0.004;
const NEAR_SIGMA_WIDE: f64 = 0.015;

/// Labeled SDF samples per shape: near-surface Gaussian offsets plus uniform
/// box samples, each with the exact analytic SDF.
pub fn build_prior_dataset(
    family: &[ShapeSpec],
    samples_per_shape: usize,
    seed: u64,
) -> Result<PriorDataset> {
    let bounds = canonical_bounds();
    let shapes = family
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let shape_seed = seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let n_near = (samples_per_shape as f64 * NEAR_SURFACE_FRACTION).round() as usize;
            let surface = sample_surface(spec, n_near.max(1), shape_seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(shape_seed ^ 0x5A5A);
            let mut samples = Vec::with_capacity(samples_per_shape);
            for (k, &p) in surface.points().iter().enumerate() {
                let sigma = if k % 3 == 2 { NEAR_SIGMA_WIDE } else { NEAR_SIGMA_TIGHT };
                let q = p + Vec3::new(
                    gaussian(&mut rng) * sigma,
                    gaussian(&mut rng) * sigma,
                    gaussian(&mut rng) * sigma,
                );
                samples.push(SdfSample {
                    position: q,
                    sdf: sdf_eval(spec, q),
                });
            }
            while samples.len() < samples_per_shape {
                let ext = bounds.extent();
                let q = Vec3::new(
                    bounds.min.x + rng.gen::<f64>() * ext.x,
                    bounds.min.y + rng.gen::<f64>() * ext.y,
                    bounds.min.z + rng.gen::<f64>() * ext.z,
                );
                samples.push(SdfSample {
                    position: q,
                    sdf: sdf_eval(spec, q),
                });
            }
            Ok(ShapeSamples {
                spec: *spec,
                samples,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PriorDataset { shapes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: DecoderConfig,
    pub epochs: usize,
    /// Random batches drawn per shape per epoch.
    pub batches_per_shape: usize,
    pub batch_size: usize,
    pub weight_lr: f64,
    pub latent_lr: f64,
    /// SDF clamp delta, meters.
    pub clamp: f64,
    /// Latent L2 regularization weight.
    pub latent_reg: f64,
    pub latent_init_sigma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: DecoderConfig::default(),
            epochs: 40,
            batches_per_shape: 2,
            batch_size: 1024,
            weight_lr: 5e-4,
            latent_lr: 5e-3,
            clamp: 0.02,
            latent_reg: 1e-4,
            latent_init_sigma: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Small setup that trains in seconds; used by tests and quick runs.
    pub fn compact(seed: u64) -> Self {
        TrainConfig {
            arch: DecoderConfig::compact(),
            epochs: 30,
            batches_per_shape: 2,
            batch_size: 512,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

fn clamp_sym(v: f64, delta: f64) -> f64 {
    v.clamp(-delta, delta)
}

/// Clamped-L1 SDF loss over a batch plus latent regularization; returns the
/// loss and accumulates gradients. Deterministic for any worker count.
fn shape_batch_step(
    decoder: &SdfDecoder,
    samples: &[SdfSample],
    batch: &[usize],
    z: &[f64],
    clamp: f64,
    latent_reg: f64,
    grad_params: &mut [f64],
    grad_z: &mut [f64],
) -> f64 {
    const CHUNK: usize = 128;
    let scale = 1.0 / batch.len() as f64;
    let chunks: Vec<&[usize]> = batch.chunks(CHUNK).collect();
    let partials: Vec<(f64, Vec<f64>, Vec<f64>)> = chunks
        .par_iter()
        .map(|chunk| {
            let mut loss = 0.0;
            let mut gp = vec![0.0; decoder.params.len()];
            let mut gz = vec![0.0; z.len()];
            for &si in *chunk {
                let s = &samples[si];
                let trace = decoder.forward_trace(z, s.position);
                let pred = trace.acts.last().unwrap()[0];
                let diff = clamp_sym(pred, clamp) - clamp_sym(s.sdf, clamp);
                loss += diff.abs() * scale;
                let d_pred = if pred.abs() < clamp {
                    diff.signum() * scale
                } else {
                    0.0
                };
                if d_pred != 0.0 {
                    decoder.backward(&trace, d_pred, Some(&mut gp), Some(&mut gz));
                }
            }
            (loss, gp, gz)
        })
        .collect();
    let mut loss = 0.0;
    for (l, gp, gz) in partials {
        loss += l;
        for (a, b) in grad_params.iter_mut().zip(gp) {
            *a += b;
        }
        for (a, b) in grad_z.iter_mut().zip(gz) {
            *a += b;
        }
    }
    let z_sq: f64 = z.iter().map(|v| v * v).sum();
    loss += latent_reg * z_sq;
    for (g, &v) in grad_z.iter_mut().zip(z) {
        *g += 2.0 * latent_reg * v;
    }
    loss
}

/// Jointly optimize decoder weights and per-shape latent codes.
pub fn train_autodecoder(dataset: &PriorDataset, cfg: &TrainConfig) -> Result<(SdfDecoder, TrainReport)> {
    if dataset.shapes.len() < 2 {
        return Err(Error::InvalidConfig(
            "auto-decoder training needs >= 2 shapes".into(),
        ));
    }
    let mut decoder = SdfDecoder::init(
        cfg.arch.clone(),
        dataset.shapes.len(),
        cfg.seed,
        cfg.latent_init_sigma,
    );
    let mut opt_params = Optimizer::new(OptimizerKind::adam(), cfg.weight_lr, decoder.params.len());
    let mut opt_latents: Vec<Optimizer> = (0..dataset.shapes.len())
        .map(|_| Optimizer::new(OptimizerKind::adam(), cfg.latent_lr, cfg.arch.latent_dim))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7E57);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut grad_params = vec![0.0; decoder.params.len()];
    let mut grad_z = vec![0.0; cfg.arch.latent_dim];
    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.shapes.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0;
        for &shape_idx in &order {
            let samples = &dataset.shapes[shape_idx].samples;
            for _ in 0..cfg.batches_per_shape {
                let batch: Vec<usize> = (0..cfg.batch_size.min(samples.len()))
                    .map(|_| rng.gen_range(0..samples.len()))
                    .collect();
                grad_params.iter_mut().for_each(|g| *g = 0.0);
                grad_z.iter_mut().for_each(|g| *g = 0.0);
                let z = decoder.latents[shape_idx].clone();
                let loss = shape_batch_step(
                    &decoder,
                    samples,
                    &batch,
                    &z,
                    cfg.clamp,
                    cfg.latent_reg,
                    &mut grad_params,
                    &mut grad_z,
                );
                if !loss.is_finite() {
                    return Err(Error::Diverged("non-finite training loss".into()));
                }
                epoch_loss += loss;
                steps += 1;
                opt_params.apply(&mut decoder.params, &grad_params);
                opt_latents[shape_idx].apply(&mut decoder.latents[shape_idx], &grad_z);
            }
        }
        epoch_losses.push(epoch_loss / steps as f64);
    }
    let report = TrainReport {
        initial_loss: epoch_losses[0],
        final_loss: *epoch_losses.last().unwrap(),
        epoch_losses,
    };
    Ok((decoder, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub clamp: f64,
    pub latent_reg: f64,
    /// Mean |decoder sdf| above this means the object is outside the family.
    pub fit_tolerance: f64,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            iterations: 400,
            learning_rate: 0.02,
            clamp: 0.02,
            latent_reg: 1e-4,
            fit_tolerance: 0.008,
        }
    }
}

/// Optimize a latent code so the decoder's zero level set passes through the
/// normalized partial cloud (every partial point is labeled SDF = 0).
/// Deterministic: full-batch gradients from a zero initialization.
pub fn infer_latent(
    decoder: &SdfDecoder,
    partial: &PointCloud,
    cfg: &InferConfig,
) -> Result<LatentCode> {
    if partial.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let points = partial.points();
    let mut z = vec![0.0; decoder.cfg.latent_dim];
    let mut opt = Optimizer::new(OptimizerKind::adam(), cfg.learning_rate, z.len());
    const CHUNK: usize = 256;
    for _ in 0..cfg.iterations {
        let chunks: Vec<&[Vec3]> = points.chunks(CHUNK).collect();
        let z_ref = &z;
        let partials: Vec<Vec<f64>> = chunks
            .par_iter()
            .map(|chunk| {
                let mut gz = vec![0.0; z_ref.len()];
                for &p in *chunk {
                    let trace = decoder.forward_trace(z_ref, p);
                    let pred = trace.acts.last().unwrap()[0];
                    // Target SDF is 0; clamp(0) = 0.
                    let d_pred = if pred.abs() < cfg.clamp {
                        clamp_sym(pred, cfg.clamp).signum()
                    } else {
                        0.0
                    };
                    if d_pred != 0.0 {
                        decoder.backward(&trace, d_pred, None, Some(&mut gz));
                    }
                }
                gz
            })
            .collect();
        let mut grad = vec![0.0; z.len()];
        for gz in partials {
            for (a, b) in grad.iter_mut().zip(gz) {
                *a += b;
            }
        }
        let scale = 1.0 / points.len() as f64;
        for (g, &v) in grad.iter_mut().zip(&z) {
            *g = *g * scale + 2.0 * cfg.latent_reg * v;
        }
        opt.apply(&mut z, &grad);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged("latent inference diverged".into()));
        }
    }
    let residual: f64 = points
        .par_iter()
        .map(|&p| decoder.predict(&z, p).abs())
        .sum::<f64>()
        / points.len() as f64;
    if residual > cfg.fit_tolerance {
        return Err(Error::PriorMismatch {
            residual,
            tolerance: cfg.fit_tolerance,
        });
    }
    Ok(LatentCode { z })
}

/// Evaluate the decoder on a grid and extract the zero isosurface. Returns
/// the vertex cloud (with gradient normals) and the mesh.
pub fn reconstruct_surface(
    decoder: &SdfDecoder,
    code: &LatentCode,
    grid_res: usize,
) -> Result<(PointCloud, TriangleMesh)> {
    let grid = ScalarGrid::sample(canonical_bounds(), grid_res, |p| decoder.predict(&code.z, p));
    let mesh = marching_cubes(&grid, 0.0)?;
    let mut mesh = largest_component(&mesh);
    let h = 0.5 * grid.cell_size();
    mesh.normals = mesh
        .vertices
        .par_iter()
        .map(|&v| {
            let g = Vec3::new(
                decoder.predict(&code.z, v + Vec3::X * h) - decoder.predict(&code.z, v - Vec3::X * h),
                decoder.predict(&code.z, v + Vec3::Y * h) - decoder.predict(&code.z, v - Vec3::Y * h),
                decoder.predict(&code.z, v + Vec3::Z * h) - decoder.predict(&code.z, v - Vec3::Z * h),
            );
            g.try_normalized().unwrap_or(Vec3::Z)
        })
        .collect();
    let cloud = PointCloud::with_normals(mesh.vertices.clone(), mesh.normals.clone())?;
    Ok((cloud, mesh))
}

#[derive(Serialize, Deserialize)]
struct DecoderCheckpoint {
    version: u32,
    label: String,
    cfg: DecoderConfig,
    params: Vec<f64>,
    latents: Vec<Vec<f64>>,
    train_config_hash: String,
}

const DECODER_CHECKPOINT_VERSION: u32 = 1;

pub fn train_config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_decoder(
    path: impl AsRef<std::path::Path>,
    decoder: &SdfDecoder,
    train_cfg: &TrainConfig,
) -> Result<()> {
    let ckpt = DecoderCheckpoint {
        version: DECODER_CHECKPOINT_VERSION,
        label: decoder.label.clone(),
        cfg: decoder.cfg.clone(),
        params: decoder.params.clone(),
        latents: decoder.latents.clone(),
        train_config_hash: train_config_hash(train_cfg),
    };
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(f, &ckpt)?;
    Ok(())
}

pub fn load_decoder(path: impl AsRef<std::path::Path>) -> Result<SdfDecoder> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let ckpt: DecoderCheckpoint = serde_json::from_reader(f)?;
    if ckpt.version != DECODER_CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion(ckpt.version));
    }
    if ckpt.params.len() != ckpt.cfg.param_count() {
        return Err(Error::Parse("decoder checkpoint parameter count".into()));
    }
    Ok(SdfDecoder {
        cfg: ckpt.cfg,
        params: ckpt.params,
        latents: ckpt.latents,
        label: ckpt.label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::chamfer;

    fn tiny_family(seed: u64) -> Vec<ShapeSpec> {
        training_family(ShapeKind::Cylindrical, 8, seed, 0.105)
    }

    #[test]
    fn dataset_samples_carry_exact_sdf() {
        let family = tiny_family(1);
        let ds = build_prior_dataset(&family[..2], 200, 3).unwrap();
        for shape in &ds.shapes {
            for s in &shape.samples {
                assert_eq!(s.sdf, sdf_eval(&shape.spec, s.position));
            }
        }
    }

    #[test]
    fn dataset_near_fraction_and_determinism() {
        let family = tiny_family(2);
        let ds = build_prior_dataset(&family[..3], 1000, 5).unwrap();
        let ds2 = build_prior_dataset(&family[..3], 1000, 5).unwrap();
        for (a, b) in ds.shapes.iter().zip(&ds2.shapes) {
            assert_eq!(a.samples, b.samples);
        }
        // 90% near-surface: those have small |sdf|.
        for shape in &ds.shapes {
            let near = shape
                .samples
                .iter()
                .filter(|s| s.sdf.abs() < 6.0 * NEAR_SIGMA_WIDE)
                .count();
            let frac = near as f64 / shape.samples.len() as f64;
            assert!(frac >= 0.89, "near fraction {frac}");
        }
    }

    #[test]
    fn decoder_gradient_matches_finite_differences() {
        let family = tiny_family(3);
        let ds = build_prior_dataset(&family[..2], 400, 7).unwrap();
        let cfg = TrainConfig::compact(11);
        let mut decoder = SdfDecoder::init(cfg.arch.clone(), 2, 11, 0.01);
        let z = decoder.latents[0].clone();
        // A fixed batch away from clamp kinks.
        let batch: Vec<usize> = (0..ds.shapes[0].samples.len())
            .filter(|&i| {
                let s = &ds.shapes[0].samples[i];
                let pred = decoder.predict(&z, s.position);
                (pred - s.sdf).abs() > 1e-3
                    && (pred.abs() - cfg.clamp).abs() > 1e-3
                    && (s.sdf.abs() - cfg.clamp).abs() > 1e-3
            })
            .take(64)
            .collect();
        assert!(batch.len() >= 32);
        let mut grad_params = vec![0.0; decoder.params.len()];
        let mut grad_z = vec![0.0; z.len()];
        let loss0 = shape_batch_step(
            &decoder,
            &ds.shapes[0].samples,
            &batch,
            &z,
            cfg.clamp,
            cfg.latent_reg,
            &mut grad_params,
            &mut grad_z,
        );
        assert!(loss0.is_finite());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        let mut tried = 0;
        while checked < 32 && tried < 2000 {
            tried += 1;
            let idx = rng.gen_range(0..decoder.params.len());
            if grad_params[idx].abs() < 1e-9 {
                continue;
            }
            let h = 1e-6;
            let orig = decoder.params[idx];
            decoder.params[idx] = orig + h;
            let mut d1 = vec![0.0; decoder.params.len()];
            let mut d2 = vec![0.0; z.len()];
            let lp = shape_batch_step(
                &decoder,
                &ds.shapes[0].samples,
                &batch,
                &z,
                cfg.clamp,
                cfg.latent_reg,
                &mut d1,
                &mut d2,
            );
            decoder.params[idx] = orig - h;
            d1.iter_mut().for_each(|v| *v = 0.0);
            d2.iter_mut().for_each(|v| *v = 0.0);
            let lm = shape_batch_step(
                &decoder,
                &ds.shapes[0].samples,
                &batch,
                &z,
                cfg.clamp,
                cfg.latent_reg,
                &mut d1,
                &mut d2,
            );
            decoder.params[idx] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad_params[idx]).abs() / grad_params[idx].abs().max(1e-12);
            assert!(
                rel < 1e-4,
                "param {idx}: analytic {} vs fd {fd} (rel {rel})",
                grad_params[idx]
            );
            checked += 1;
        }
        assert!(checked >= 32, "only {checked} checked");
    }

    #[test]
    fn single_shape_family_reproduces_sdf() {
        // Two copies of the same shape (training needs >= 2 latents).
        let spec = crate::scenegen::standard_cylindrical_cup();
        let ds = build_prior_dataset(&[spec, spec], 2500, 9).unwrap();
        let mut cfg = TrainConfig::compact(13);
        cfg.epochs = 60;
        let (decoder, report) = train_autodecoder(&ds, &cfg).unwrap();
        assert!(report.final_loss < 0.25 * report.initial_loss);
        let z = decoder.training_latent(0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut total = 0.0;
        let mut n = 0;
        for _ in 0..500 {
            let p = Vec3::new(
                rng.gen_range(-0.06..0.06),
                rng.gen_range(-0.06..0.06),
                rng.gen_range(-0.01..0.12),
            );
            let truth = sdf_eval(&spec, p);
            if truth.abs() > cfg.clamp {
                continue; // loss only shapes the clamp band
            }
            total += (decoder.predict(&z.z, p) - truth).abs();
            n += 1;
        }
        let mae = total / n as f64;
        assert!(mae < 0.002, "mean absolute sdf error {mae}");
    }

    #[test]
    fn latents_do_not_collapse() {
        let family = tiny_family(17);
        let ds = build_prior_dataset(&family[..4], 800, 21).unwrap();
        let mut cfg = TrainConfig::compact(23);
        cfg.epochs = 10;
        let (decoder, report) = train_autodecoder(&ds, &cfg).unwrap();
        assert!(report.final_loss < report.initial_loss);
        for i in 0..4 {
            for j in i + 1..4 {
                let zi = &decoder.latents[i];
                let zj = &decoder.latents[j];
                let d: f64 = zi
                    .iter()
                    .zip(zj)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(d > 0.0, "latents {i} and {j} collapsed");
            }
        }
    }

    #[test]
    fn epoch_losses_trend_downward() {
        let family = tiny_family(31);
        let ds = build_prior_dataset(&family[..4], 800, 33).unwrap();
        let mut cfg = TrainConfig::compact(35);
        cfg.epochs = 12;
        let (_, report) = train_autodecoder(&ds, &cfg).unwrap();
        // Monotone over epoch averages, allowing small noise.
        for w in report.epoch_losses.windows(2) {
            assert!(w[1] < w[0] * 1.15, "epoch loss rose: {:?}", report.epoch_losses);
        }
        assert!(report.final_loss < report.initial_loss);
    }

    #[test]
    fn infer_latent_rejects_empty_cloud() {
        let family = tiny_family(41);
        let ds = build_prior_dataset(&family[..2], 300, 43).unwrap();
        let mut cfg = TrainConfig::compact(45);
        cfg.epochs = 2;
        let (decoder, _) = train_autodecoder(&ds, &cfg).unwrap();
        let empty = PointCloud::from_points(vec![]).unwrap();
        assert!(infer_latent(&decoder, &empty, &InferConfig::default()).is_err());
    }

    #[test]
    fn infer_latent_is_deterministic() {
        let family = tiny_family(51);
        let ds = build_prior_dataset(&family[..3], 600, 53).unwrap();
        let mut cfg = TrainConfig::compact(55);
        cfg.epochs = 12;
        let (decoder, _) = train_autodecoder(&ds, &cfg).unwrap();
        let cloud = sample_surface(&family[0], 400, 57).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                infer_latent(&decoder, &cloud, &InferConfig {
                    iterations: 60,
                    ..InferConfig::default()
                })
            })
        };
        let a = run(1);
        let b = run(3);
        match (a, b) {
            (Ok(a), Ok(b)) => assert_eq!(a.z, b.z),
            (Err(_), Err(_)) => {} // both mismatch identically is also deterministic
            _ => panic!("determinism broken across worker counts"),
        }
    }

    #[test]
    fn training_shape_recovered_from_full_samples() {
        let family = tiny_family(61);
        let ds = build_prior_dataset(&family[..6], 1500, 63).unwrap();
        let mut cfg = TrainConfig::compact(65);
        cfg.epochs = 50;
        let (decoder, _) = train_autodecoder(&ds, &cfg).unwrap();
        let spec = family[2];
        let cloud = sample_surface(&spec, 1200, 67).unwrap();
        let code = infer_latent(&decoder, &cloud, &InferConfig::default()).unwrap();
        let (recon, mesh) = reconstruct_surface(&decoder, &code, 72).unwrap();
        assert!(mesh.is_watertight());
        let truth = sample_surface(&spec, 2500, 69).unwrap();
        let d = chamfer(&recon, &truth).unwrap();
        assert!(d < 0.002, "chamfer {d}");
        // Marching-cubes consistency: vertices sit near the zero level set.
        let cell = 0.26 / 71.0;
        for v in recon.points().iter().step_by(7) {
            assert!(decoder.predict(&code.z, *v).abs() < 1.5 * cell);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let family = tiny_family(71);
        let ds = build_prior_dataset(&family[..2], 300, 73).unwrap();
        let mut cfg = TrainConfig::compact(75);
        cfg.epochs = 2;
        let (mut decoder, _) = train_autodecoder(&ds, &cfg).unwrap();
        decoder.label = "cylindrical".into();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decoder.json");
        save_decoder(&path, &decoder, &cfg).unwrap();
        let back = load_decoder(&path).unwrap();
        assert_eq!(decoder.params, back.params);
        assert_eq!(decoder.latents, back.latents);
        assert_eq!(back.label, "cylindrical");
    }
}
