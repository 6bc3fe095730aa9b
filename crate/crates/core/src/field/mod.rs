//! Volumetric density field: multi-resolution hash encoding feeding a small
//! decoder, fitted to rays by gradient descent and queried for band
//! extraction.

mod extract;
mod fit;
mod render;

pub use extract::{extract_points, ExtractConfig, ExtractedPoints};
pub use fit::{fit_field, hemisphere_rays, FitConfig, FitReport, OpacityModel, RaySupervision};
pub use render::{render_ray, render_sigma, Ray, RenderResult};

use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fixed odd multipliers of the spatial hash, one per dimension.
const HASH_PRIMES: [u64; 3] = [2_654_435_761, 805_459_861, 3_674_653_429];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Number of encoding levels.
    pub levels: usize,
    /// Feature dimension per level.
    pub features: usize,
    /// log2 of the per-level hash table size.
    pub table_size_log2: u32,
    /// Coarsest grid resolution (cells per axis).
    pub coarse_resolution: u32,
    /// Finest grid resolution; levels are spaced geometrically in between.
    pub fine_resolution: u32,
    /// Decoder hidden width (one hidden layer).
    pub hidden: usize,
    /// Initial output bias; softplus of this is the starting density.
    pub sigma_bias: f64,
    pub init_seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            levels: 8,
            features: 2,
            table_size_log2: 14,
            coarse_resolution: 8,
            fine_resolution: 128,
            hidden: 32,
            sigma_bias: -2.0,
            init_seed: 0,
        }
    }
}

impl FieldConfig {
    pub fn table_size(&self) -> usize {
        1usize << self.table_size_log2
    }

    pub fn feature_len(&self) -> usize {
        self.levels * self.features
    }

    fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig("field dims must be positive".into()));
        }
        if self.coarse_resolution < 1 || self.fine_resolution <= self.coarse_resolution {
            return Err(Error::InvalidConfig(
                "field resolutions must be increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Offsets into the flat parameter vector.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ParamLayout {
    pub tables: usize,
    pub tables_len: usize,
    pub level_weights: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub total: usize,
}

impl ParamLayout {
    fn new(cfg: &FieldConfig) -> Self {
        let tables_len = cfg.levels * cfg.table_size() * cfg.features;
        let in_dim = cfg.feature_len();
        let level_weights = tables_len;
        let w1 = level_weights + cfg.levels;
        let b1 = w1 + cfg.hidden * in_dim;
        let w2 = b1 + cfg.hidden;
        let b2 = w2 + cfg.hidden;
        ParamLayout {
            tables: 0,
            tables_len,
            level_weights,
            w1,
            b1,
            w2,
            b2,
            total: b2 + 1,
        }
    }
}

/// Per-sample record of everything the backward pass needs.
pub(crate) struct SigmaTrace {
    /// Per level: 8 (table row start within the tables block, trilinear weight).
    pub corners: Vec<[(u32, f64); 8]>,
    /// Unscaled interpolated features per level (levels * features).
    pub raw: Vec<f64>,
    /// Scaled, concatenated feature vector (decoder input).
    pub feat: Vec<f64>,
    /// Hidden activations (tanh).
    pub hidden: Vec<f64>,
    /// Pre-activation of the output unit.
    pub pre_out: f64,
}

#[derive(Clone, Debug)]
pub struct DensityField {
    cfg: FieldConfig,
    bbox: Aabb,
    resolutions: Vec<u32>,
    layout_total: usize,
    params: Vec<f64>,
}

fn level_resolutions(cfg: &FieldConfig) -> Vec<u32> {
    let l = cfg.levels;
    if l == 1 {
        return vec![cfg.coarse_resolution];
    }
    let growth =
        (cfg.fine_resolution as f64 / cfg.coarse_resolution as f64).powf(1.0 / (l as f64 - 1.0));
    let mut out = Vec::with_capacity(l);
    let mut prev = 0u32;
    for i in 0..l {
        let mut n = (cfg.coarse_resolution as f64 * growth.powi(i as i32)).round() as u32;
        if n <= prev {
            n = prev + 1;
        }
        out.push(n);
        prev = n;
    }
    out
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl DensityField {
    pub fn new(cfg: FieldConfig, bbox: Aabb) -> Result<Self> {
        cfg.validate()?;
        let layout = ParamLayout::new(&cfg);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        for p in &mut params[layout.tables..layout.tables + layout.tables_len] {
            *p = rng.gen_range(-1e-4..1e-4);
        }
        for p in &mut params[layout.level_weights..layout.level_weights + cfg.levels] {
            *p = 1.0;
        }
        let in_dim = cfg.feature_len();
        let s1 = (6.0 / (in_dim + cfg.hidden) as f64).sqrt();
        for p in &mut params[layout.w1..layout.w1 + cfg.hidden * in_dim] {
            *p = rng.gen_range(-s1..s1);
        }
        let s2 = (6.0 / (cfg.hidden + 1) as f64).sqrt();
        for p in &mut params[layout.w2..layout.w2 + cfg.hidden] {
            *p = rng.gen_range(-s2..s2);
        }
        params[layout.b2] = cfg.sigma_bias;
        Ok(DensityField {
            resolutions: level_resolutions(&cfg),
            layout_total: layout.total,
            cfg,
            bbox,
            params,
        })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.cfg
    }

    pub fn bounds(&self) -> Aabb {
        self.bbox
    }

    pub fn resolutions(&self) -> &[u32] {
        &self.resolutions
    }

    pub(crate) fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.cfg)
    }

    pub fn param_count(&self) -> usize {
        self.layout_total
    }

    pub(crate) fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn level_weight(&self, level: usize) -> f64 {
        let layout = self.layout();
        self.params[layout.level_weights + level]
    }

    /// Feature row of the given hash-table slot at a level.
    pub fn table_row(&self, level: usize, slot: usize) -> &[f64] {
        let layout = self.layout();
        let f = self.cfg.features;
        let start = layout.tables + (level * self.cfg.table_size() + slot) * f;
        &self.params[start..start + f]
    }

    /// Hash-table slot of an integer grid corner.
    pub fn corner_slot(&self, corner: [u32; 3]) -> usize {
        let mask = (self.cfg.table_size() - 1) as u64;
        (((corner[0] as u64).wrapping_mul(HASH_PRIMES[0])
            ^ (corner[1] as u64).wrapping_mul(HASH_PRIMES[1])
            ^ (corner[2] as u64).wrapping_mul(HASH_PRIMES[2]))
            & mask) as usize
    }

    /// Multi-level hash encoding of a position inside the bounding box:
    /// per level, trilinear interpolation of the 8 hashed corner rows scaled
    /// by the level weight, concatenated coarse to fine.
    pub fn hash_encode(&self, x: Vec3) -> Result<Vec<f64>> {
        Ok(self.encode_trace(x)?.feat)
    }

    pub(crate) fn encode_trace(&self, x: Vec3) -> Result<SigmaTrace> {
        if !self.bbox.contains(x) {
            return Err(Error::OutOfBounds(x));
        }
        let ext = self.bbox.extent();
        let rel = Vec3::new(
            (x.x - self.bbox.min.x) / ext.x,
            (x.y - self.bbox.min.y) / ext.y,
            (x.z - self.bbox.min.z) / ext.z,
        );
        let f = self.cfg.features;
        let layout = self.layout();
        let mask = (self.cfg.table_size() - 1) as u64;
        let mut corners = Vec::with_capacity(self.cfg.levels);
        let mut raw = vec![0.0; self.cfg.levels * f];
        let mut feat = vec![0.0; self.cfg.levels * f];
        for (l, &res) in self.resolutions.iter().enumerate() {
            let n = res as f64;
            let u = [
                (rel.x * n).min(n - 1e-9).max(0.0),
                (rel.y * n).min(n - 1e-9).max(0.0),
                (rel.z * n).min(n - 1e-9).max(0.0),
            ];
            let c0 = [u[0].floor() as u32, u[1].floor() as u32, u[2].floor() as u32];
            let fr = [u[0] - c0[0] as f64, u[1] - c0[1] as f64, u[2] - c0[2] as f64];
            let mut level_corners = [(0u32, 0.0f64); 8];
            for (ci, corner) in level_corners.iter_mut().enumerate() {
                let dx = (ci & 1) as u32;
                let dy = ((ci >> 1) & 1) as u32;
                let dz = ((ci >> 2) & 1) as u32;
                let w = (if dx == 1 { fr[0] } else { 1.0 - fr[0] })
                    * (if dy == 1 { fr[1] } else { 1.0 - fr[1] })
                    * (if dz == 1 { fr[2] } else { 1.0 - fr[2] });
                let slot = (((c0[0] + dx) as u64).wrapping_mul(HASH_PRIMES[0])
                    ^ ((c0[1] + dy) as u64).wrapping_mul(HASH_PRIMES[1])
                    ^ ((c0[2] + dz) as u64).wrapping_mul(HASH_PRIMES[2]))
                    & mask;
                let row = (l * self.cfg.table_size() + slot as usize) * f;
                *corner = (row as u32, w);
                for k in 0..f {
                    raw[l * f + k] += w * self.params[layout.tables + row + k];
                }
            }
            corners.push(level_corners);
            let wl = self.params[layout.level_weights + l];
            for k in 0..f {
                feat[l * f + k] = wl * raw[l * f + k];
            }
        }
        Ok(SigmaTrace {
            corners,
            raw,
            feat,
            hidden: Vec::new(),
            pre_out: 0.0,
        })
    }

    /// Density at a position (softplus output, always nonnegative).
    pub fn sigma(&self, x: Vec3) -> Result<f64> {
        Ok(softplus(self.sigma_trace(x)?.pre_out))
    }

    pub(crate) fn sigma_trace(&self, x: Vec3) -> Result<SigmaTrace> {
        let mut trace = self.encode_trace(x)?;
        let layout = self.layout();
        let in_dim = self.cfg.feature_len();
        let h = self.cfg.hidden;
        let mut hidden = vec![0.0; h];
        for j in 0..h {
            let mut acc = self.params[layout.b1 + j];
            let row = layout.w1 + j * in_dim;
            for (i, &fi) in trace.feat.iter().enumerate() {
                acc += self.params[row + i] * fi;
            }
            hidden[j] = acc.tanh();
        }
        let mut pre = self.params[layout.b2];
        for j in 0..h {
            pre += self.params[layout.w2 + j] * hidden[j];
        }
        trace.hidden = hidden;
        trace.pre_out = pre;
        Ok(trace)
    }

    /// Accumulate parameter gradients for one sample given dL/dsigma.
    pub(crate) fn backward_sigma(
        &self,
        trace: &SigmaTrace,
        d_sigma: f64,
        table_grad: &mut Vec<(u32, f64)>,
        rest_grad: &mut [f64],
    ) {
        let layout = self.layout();
        let in_dim = self.cfg.feature_len();
        let h = self.cfg.hidden;
        let f = self.cfg.features;
        // rest_grad covers everything after the tables block.
        let lw_off = 0;
        let w1_off = self.cfg.levels;
        let b1_off = w1_off + h * in_dim;
        let w2_off = b1_off + h;
        let b2_off = w2_off + h;

        let d_pre = d_sigma * sigmoid(trace.pre_out);
        rest_grad[b2_off] += d_pre;
        let mut d_feat = vec![0.0; in_dim];
        for j in 0..h {
            let hj = trace.hidden[j];
            rest_grad[w2_off + j] += d_pre * hj;
            let d_hidden = d_pre * self.params[layout.w2 + j];
            let d_pre1 = d_hidden * (1.0 - hj * hj);
            rest_grad[b1_off + j] += d_pre1;
            let row = layout.w1 + j * in_dim;
            let grow = w1_off + j * in_dim;
            for i in 0..in_dim {
                rest_grad[grow + i] += d_pre1 * trace.feat[i];
                d_feat[i] += d_pre1 * self.params[row + i];
            }
        }
        for l in 0..self.cfg.levels {
            let wl = self.params[layout.level_weights + l];
            for k in 0..f {
                let df = d_feat[l * f + k];
                rest_grad[lw_off + l] += df * trace.raw[l * f + k];
                let d_raw = df * wl;
                for &(row, w) in &trace.corners[l] {
                    table_grad.push((row + k as u32, d_raw * w));
                }
            }
        }
    }
}

/// Versioned JSON checkpoint for a fitted field; round-trips bit-exactly.
#[derive(Serialize, Deserialize)]
struct FieldCheckpoint {
    version: u32,
    cfg: FieldConfig,
    bbox: Aabb,
    params: Vec<f64>,
}

const FIELD_CHECKPOINT_VERSION: u32 = 1;

pub fn save_field(path: impl AsRef<std::path::Path>, field: &DensityField) -> Result<()> {
    let ckpt = FieldCheckpoint {
        version: FIELD_CHECKPOINT_VERSION,
        cfg: field.cfg,
        bbox: field.bbox,
        params: field.params().to_vec(),
    };
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(f, &ckpt)?;
    Ok(())
}

pub fn load_field(path: impl AsRef<std::path::Path>) -> Result<DensityField> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let ckpt: FieldCheckpoint = serde_json::from_reader(f)?;
    if ckpt.version != FIELD_CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion(ckpt.version));
    }
    let mut field = DensityField::new(ckpt.cfg, ckpt.bbox)?;
    if field.params.len() != ckpt.params.len() {
        return Err(Error::Parse("field checkpoint parameter count".into()));
    }
    field.params = ckpt.params;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_field(seed: u64) -> DensityField {
        let cfg = FieldConfig {
            init_seed: seed,
            ..FieldConfig::default()
        };
        DensityField::new(cfg, Aabb::new(Vec3::ZERO, Vec3::splat(1.0))).unwrap()
    }

    #[test]
    fn resolutions_strictly_increase() {
        let field = unit_field(1);
        let res = field.resolutions();
        assert_eq!(res[0], 8);
        assert_eq!(*res.last().unwrap(), 128);
        assert!(res.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn corner_feature_is_weighted_table_row() {
        let field = unit_field(2);
        // A grid corner of the coarsest level (resolution 8): x = 3/8.
        let x = Vec3::new(3.0 / 8.0, 5.0 / 8.0, 2.0 / 8.0);
        let feat = field.hash_encode(x).unwrap();
        let mask = (field.config().table_size() - 1) as u64;
        let slot = ((3u64).wrapping_mul(HASH_PRIMES[0])
            ^ (5u64).wrapping_mul(HASH_PRIMES[1])
            ^ (2u64).wrapping_mul(HASH_PRIMES[2]))
            & mask;
        let row = field.table_row(0, slot as usize);
        let w = field.level_weight(0);
        for k in 0..field.config().features {
            assert_relative_eq!(feat[k], w * row[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn cell_center_is_mean_of_corners() {
        let field = unit_field(3);
        // Center of the corner cell of level 0.
        let x = Vec3::new(0.5 / 8.0, 0.5 / 8.0, 0.5 / 8.0);
        let feat = field.hash_encode(x).unwrap();
        let mask = (field.config().table_size() - 1) as u64;
        let f = field.config().features;
        let mut mean = vec![0.0; f];
        for ci in 0..8u64 {
            let (dx, dy, dz) = (ci & 1, (ci >> 1) & 1, (ci >> 2) & 1);
            let slot = (dx.wrapping_mul(HASH_PRIMES[0])
                ^ dy.wrapping_mul(HASH_PRIMES[1])
                ^ dz.wrapping_mul(HASH_PRIMES[2]))
                & mask;
            let row = field.table_row(0, slot as usize);
            for k in 0..f {
                mean[k] += row[k] / 8.0;
            }
        }
        let w = field.level_weight(0);
        for k in 0..f {
            assert_relative_eq!(feat[k], w * mean[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn encode_matches_independent_reimplementation() {
        let field = unit_field(4);
        let cfg = *field.config();
        let mask = (cfg.table_size() - 1) as u64;
        let reference = |x: Vec3| -> Vec<f64> {
            let mut out = Vec::new();
            for (l, &res) in field.resolutions().iter().enumerate() {
                let n = res as f64;
                let u = [x.x * n, x.y * n, x.z * n];
                let c = [u[0].floor() as u64, u[1].floor() as u64, u[2].floor() as u64];
                let fr = [u[0] - c[0] as f64, u[1] - c[1] as f64, u[2] - c[2] as f64];
                for k in 0..cfg.features {
                    let mut acc = 0.0;
                    for dz in 0..2u64 {
                        for dy in 0..2u64 {
                            for dx in 0..2u64 {
                                let w = (if dx == 1 { fr[0] } else { 1.0 - fr[0] })
                                    * (if dy == 1 { fr[1] } else { 1.0 - fr[1] })
                                    * (if dz == 1 { fr[2] } else { 1.0 - fr[2] });
                                let slot = ((c[0] + dx).wrapping_mul(HASH_PRIMES[0])
                                    ^ (c[1] + dy).wrapping_mul(HASH_PRIMES[1])
                                    ^ (c[2] + dz).wrapping_mul(HASH_PRIMES[2]))
                                    & mask;
                                acc += w * field.table_row(l, slot as usize)[k];
                            }
                        }
                    }
                    out.push(acc * field.level_weight(l));
                }
            }
            out
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = Vec3::new(rng.gen_range(0.0..0.99), rng.gen_range(0.0..0.99), rng.gen_range(0.0..0.99));
            let got = field.hash_encode(x).unwrap();
            let want = reference(x);
            for (g, w) in got.iter().zip(&want) {
                assert_relative_eq!(g, w, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn continuous_across_cell_faces() {
        let field = unit_field(6);
        let eps = 1e-7;
        for &boundary in &[1.0 / 8.0, 3.0 / 128.0, 0.5] {
            let a = field
                .hash_encode(Vec3::new(boundary - eps, 0.3, 0.7))
                .unwrap();
            let b = field
                .hash_encode(Vec3::new(boundary + eps, 0.3, 0.7))
                .unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-4, "feature jump {} at {boundary}", (x - y).abs());
            }
        }
    }

    #[test]
    fn out_of_box_is_error() {
        let field = unit_field(7);
        assert!(field.sigma(Vec3::new(1.5, 0.0, 0.0)).is_err());
        assert!(field.sigma(Vec3::splat(0.5)).is_ok());
    }

    #[test]
    fn checkpoint_roundtrip_bit_exact() {
        let field = unit_field(8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.json");
        save_field(&path, &field).unwrap();
        let back = load_field(&path).unwrap();
        assert_eq!(field.params(), back.params());
        assert_eq!(field.bounds(), back.bounds());
    }
}
