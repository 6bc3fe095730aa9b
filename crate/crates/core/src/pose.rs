//! Plane-relative pose and scale estimation for segmented objects.
//!
//! Revolute objects are located by a robust ring fit of their plane
//! projection; non-revolute objects (mugs) additionally get a yaw from the
//! protruding key region. Scale is the ratio of a canonical height to the
//! observed height above the plane.

use crate::error::{Error, Result};
use crate::cloud::{Plane, PointCloud};
use crate::math::{normalize_angle, Vec2, Vec3};
use crate::metrics::pca_axes;
use crate::shapes::ShapeKind;
use serde::{Deserialize, Serialize};

/// Plane-relative object pose: footprint center in plane coordinates, yaw
/// about the plane normal, and the uniform scale into the canonical frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub center: Vec2,
    pub yaw: f64,
    pub alpha: f64,
    pub plane: Plane,
}

impl ObjectPose {
    pub fn new(center: Vec2, yaw: f64, alpha: f64, plane: Plane) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(ObjectPose {
            center,
            yaw: normalize_angle(yaw),
            alpha,
            plane,
        })
    }
}

/// Orthogonal projection of a cluster into the plane's deterministic 2D
/// basis. Point count is preserved.
pub fn project_to_plane(cluster: &PointCloud, plane: &Plane) -> Vec<Vec2> {
    cluster
        .points()
        .iter()
        .map(|&p| plane.to_plane_coords(p))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRegionConfig {
    /// Minimum projected points for any detection attempt.
    pub min_points: usize,
    pub irls_iterations: usize,
    /// Minimum points outside the ring to call it a protrusion.
    pub min_key_points: usize,
    /// Residual threshold floor, meters.
    pub residual_floor: f64,
    /// Residual threshold as a multiple of the ring-fit RMS.
    pub residual_rms_factor: f64,
    /// Required circular concentration (mean resultant length) of key-point
    /// bearings; scattered outliers fail this, a real protrusion passes.
    pub min_concentration: f64,
}

impl Default for KeyRegionConfig {
    fn default() -> Self {
        KeyRegionConfig {
            min_points: 30,
            irls_iterations: 16,
            min_key_points: 25,
            residual_floor: 0.005,
            residual_rms_factor: 2.0,
            min_concentration: 0.7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleFit {
    pub center: Vec2,
    pub radius: f64,
    /// RMS radial residual of the ring points (robust weights applied).
    pub rms: f64,
}

/// Protruding points of a projected cluster, with the ring they protrude from.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyRegion {
    pub points2d: Vec<Vec2>,
    pub ring_center: Vec2,
    pub ring_radius: f64,
    /// Unit vector from the ring center toward the key-region centroid.
    pub direction: Vec2,
}

/// Outcome of key-region detection: revolute symmetry is a valid result, not
/// an error.
#[derive(Clone, Debug, PartialEq)]
pub enum KeyRegionOutcome {
    Revolute(CircleFit),
    Protrusion(KeyRegion),
}

/// Kasa algebraic circle fit with optional per-point weights.
fn weighted_circle_fit(points: &[Vec2], weights: &[f64]) -> Option<CircleFit> {
    // Normal equations of x^2 + y^2 + a x + b y + c = 0.
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    let mut total_w = 0.0;
    for (p, &w) in points.iter().zip(weights) {
        let row = [p.x, p.y, 1.0];
        let s = p.x * p.x + p.y * p.y;
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += w * row[r] * row[c];
            }
            rhs[r] -= w * row[r] * s;
        }
        total_w += w;
    }
    if total_w <= 0.0 {
        return None;
    }
    let sol = solve_3x3(m, rhs)?;
    let center = Vec2::new(-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = center.norm_squared() - sol[2];
    if !(r2 > 0.0) {
        return None;
    }
    Some(CircleFit {
        center,
        radius: r2.sqrt(),
        rms: 0.0,
    })
}

fn solve_3x3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &bb| m[a][col].abs().total_cmp(&m[bb][col].abs()))?;
        if m[pivot][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for c in col..3 {
                m[row][c] -= f * m[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for c in row + 1..3 {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Robust ring fit: Kasa least squares with Tukey-reweighted iterations.
pub fn fit_ring(points: &[Vec2], iterations: usize) -> Result<CircleFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate("ring fit needs >= 3 points".into()));
    }
    let mut weights = vec![1.0; points.len()];
    let mut fit = weighted_circle_fit(points, &weights)
        .ok_or_else(|| Error::Degenerate("circle fit is singular".into()))?;
    for _ in 0..iterations {
        let residuals: Vec<f64> = points
            .iter()
            .map(|p| p.distance(fit.center) - fit.radius)
            .collect();
        let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
        let scale = (1.4826 * median(&mut abs)).max(1e-6);
        let c = 4.685 * scale;
        for (w, r) in weights.iter_mut().zip(&residuals) {
            let t = r / c;
            *w = if t.abs() < 1.0 {
                let u = 1.0 - t * t;
                u * u
            } else {
                0.0
            };
        }
        match weighted_circle_fit(points, &weights) {
            Some(next) => fit = next,
            None => break,
        }
    }
    // Weighted RMS of the final fit.
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, &w) in points.iter().zip(&weights) {
        let r = p.distance(fit.center) - fit.radius;
        num += w * r * r;
        den += w;
    }
    fit.rms = if den > 0.0 { (num / den).sqrt() } else { f64::INFINITY };
    Ok(fit)
}

/// Find the protruding key region of a projected cluster, or report the
/// object as revolute.
pub fn detect_key_region(points2d: &[Vec2], cfg: &KeyRegionConfig) -> Result<KeyRegionOutcome> {
    if points2d.len() < cfg.min_points {
        return Err(Error::Degenerate(format!(
            "key-region detection needs >= {} points, got {}",
            cfg.min_points,
            points2d.len()
        )));
    }
    let fit = fit_ring(points2d, cfg.irls_iterations)?;
    let threshold = cfg
        .residual_floor
        .max(cfg.residual_rms_factor * fit.rms);
    let key: Vec<Vec2> = points2d
        .iter()
        .copied()
        .filter(|p| p.distance(fit.center) - fit.radius > threshold)
        .collect();
    if key.len() < cfg.min_key_points {
        return Ok(KeyRegionOutcome::Revolute(fit));
    }
    // Bearing concentration distinguishes a protrusion from stray outliers.
    let mut resultant = Vec2::ZERO;
    for p in &key {
        if let Some(u) = (*p - fit.center).try_normalized() {
            resultant += u;
        }
    }
    let concentration = resultant.norm() / key.len() as f64;
    if concentration < cfg.min_concentration {
        return Ok(KeyRegionOutcome::Revolute(fit));
    }
    let centroid = key.iter().fold(Vec2::ZERO, |a, &p| a + p) / key.len() as f64;
    let direction = (centroid - fit.center)
        .try_normalized()
        .ok_or_else(|| Error::Degenerate("key region centered on the ring".into()))?;
    Ok(KeyRegionOutcome::Protrusion(KeyRegion {
        points2d: key,
        ring_center: fit.center,
        ring_radius: fit.radius,
        direction,
    }))
}

/// Yaw of the key region: the PCA principal axis of its points, pointed from
/// the ring center toward the key centroid. Falls back to the centroid
/// bearing when the PCA is degenerate.
pub fn estimate_yaw(key: &KeyRegion) -> f64 {
    let centroid =
        key.points2d.iter().fold(Vec2::ZERO, |a, &p| a + p) / key.points2d.len().max(1) as f64;
    let outward = centroid - key.ring_center;
    match pca_axes(&key.points2d) {
        Ok((axis, _)) => {
            let axis = if axis.dot(outward) < 0.0 { -axis } else { axis };
            normalize_angle(axis.angle())
        }
        Err(_) => normalize_angle(outward.angle()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    /// Height of the farthest point above the plane.
    pub d_max: f64,
    /// Canonical height of the shape kind.
    pub h_std: f64,
    /// Scale factor h_std / d_max.
    pub alpha: f64,
}

/// Scale from observed height: alpha = h_std / d_max.
pub fn estimate_scale(cluster: &PointCloud, plane: &Plane, h_std: f64) -> Result<NormalizationParams> {
    if cluster.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let d_max = cluster
        .points()
        .iter()
        .map(|&p| plane.signed_distance(p))
        .fold(f64::NEG_INFINITY, f64::max);
    if d_max <= 1e-9 {
        return Err(Error::FlatCluster);
    }
    Ok(NormalizationParams {
        d_max,
        h_std,
        alpha: h_std / d_max,
    })
}

/// Map a cluster into the canonical prior frame: footprint center to the
/// origin, yaw to zero, plane to z = 0, then uniform scaling by alpha.
pub fn normalize_cloud(cluster: &PointCloud, pose: &ObjectPose) -> PointCloud {
    let plane = pose.plane;
    let (u, v) = plane.basis();
    let n = plane.normal();
    let point_map = |p: Vec3| {
        let q = plane.to_plane_coords(p) - pose.center;
        let q = q.rotated(-pose.yaw);
        let h = plane.signed_distance(p);
        Vec3::new(q.x, q.y, h) * pose.alpha
    };
    let dir_map = |d: Vec3| {
        let local = Vec2::new(d.dot(u), d.dot(v)).rotated(-pose.yaw);
        Vec3::new(local.x, local.y, d.dot(n))
    };
    cluster.mapped(point_map, dir_map)
}

/// Inverse of [`normalize_cloud`].
pub fn denormalize_cloud(canonical: &PointCloud, pose: &ObjectPose) -> PointCloud {
    let plane = pose.plane;
    let (u, v) = plane.basis();
    let n = plane.normal();
    let point_map = |p: Vec3| {
        let unscaled = p / pose.alpha;
        let q = Vec2::new(unscaled.x, unscaled.y).rotated(pose.yaw) + pose.center;
        plane.from_plane_coords(q, unscaled.z)
    };
    let dir_map = |d: Vec3| {
        let in_plane = Vec2::new(d.x, d.y).rotated(pose.yaw);
        u * in_plane.x + v * in_plane.y + n * d.z
    };
    canonical.mapped(point_map, dir_map)
}

/// Canonical heights per shape kind; the priors are trained at these heights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightTable {
    pub cylindrical: f64,
    pub prismatic: f64,
    pub mug: f64,
}

impl Default for HeightTable {
    fn default() -> Self {
        HeightTable {
            cylindrical: 0.105,
            prismatic: 0.10,
            mug: 0.095,
        }
    }
}

impl HeightTable {
    pub fn get(&self, kind: ShapeKind) -> f64 {
        match kind {
            ShapeKind::Cylindrical => self.cylindrical,
            ShapeKind::Prismatic => self.prismatic,
            ShapeKind::Mug => self.mug,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseConfig {
    pub key_region: KeyRegionConfig,
    pub heights: HeightTable,
    /// Harmonic detection threshold: amplitude must exceed this multiple of
    /// the ring noise baseline to call a prism.
    pub prism_harmonic_factor: f64,
    /// Prism side counts considered by the periodicity test.
    pub prism_sides: [u32; 3],
}

impl Default for PoseConfig {
    fn default() -> Self {
        PoseConfig {
            key_region: KeyRegionConfig::default(),
            heights: HeightTable::default(),
            prism_harmonic_factor: 6.0,
            prism_sides: [4, 6, 8],
        }
    }
}

/// Geometric shape-kind inference from the plane projection: a protrusion
/// means mug; a k-fold periodic radius profile means prism; a near-constant
/// ring means cylinder. Returns the kind and its yaw.
pub fn infer_kind(points2d: &[Vec2], cfg: &PoseConfig) -> Result<(ShapeKind, f64, CircleFit)> {
    match detect_key_region(points2d, &cfg.key_region)? {
        KeyRegionOutcome::Protrusion(key) => {
            let yaw = estimate_yaw(&key);
            let fit = CircleFit {
                center: key.ring_center,
                radius: key.ring_radius,
                rms: 0.0,
            };
            Ok((ShapeKind::Mug, yaw, fit))
        }
        KeyRegionOutcome::Revolute(fit) => {
            // Ring band only: caps and interior points would pollute the
            // radius profile.
            let band = cfg
                .key_region
                .residual_floor
                .max(cfg.key_region.residual_rms_factor * fit.rms);
            let ring: Vec<(f64, f64)> = points2d
                .iter()
                .filter_map(|p| {
                    let d = *p - fit.center;
                    let r = d.norm();
                    ((r - fit.radius).abs() <= 3.0 * band).then(|| (r, d.angle()))
                })
                .collect();
            if ring.len() < 50 {
                return Ok((ShapeKind::Cylindrical, 0.0, fit));
            }
            let mean_r = ring.iter().map(|(r, _)| r).sum::<f64>() / ring.len() as f64;
            let var =
                ring.iter().map(|(r, _)| (r - mean_r) * (r - mean_r)).sum::<f64>() / ring.len() as f64;
            let baseline = (var.sqrt() * (2.0 / ring.len() as f64).sqrt()).max(1e-6);
            let mut best: Option<(u32, f64, f64)> = None;
            for &k in &cfg.prism_sides {
                let (mut re, mut im) = (0.0, 0.0);
                for &(r, theta) in &ring {
                    re += (r - mean_r) * (k as f64 * theta).cos();
                    im -= (r - mean_r) * (k as f64 * theta).sin();
                }
                re /= ring.len() as f64;
                im /= ring.len() as f64;
                let amplitude = 2.0 * (re * re + im * im).sqrt();
                if best.map_or(true, |(_, a, _)| amplitude > a) {
                    best = Some((k, amplitude, im.atan2(re)));
                }
            }
            match best {
                Some((k, amplitude, phase)) if amplitude > cfg.prism_harmonic_factor * baseline => {
                    // Radius peaks at vertices; flats (canonical yaw) sit at
                    // the harmonic minimum.
                    let yaw = normalize_angle((std::f64::consts::PI - phase) / k as f64);
                    Ok((ShapeKind::Prismatic, yaw, fit))
                }
                _ => Ok((ShapeKind::Cylindrical, 0.0, fit)),
            }
        }
    }
}

/// Full geometric pose estimate for one segmented cluster.
#[derive(Clone, Debug)]
pub struct PoseEstimate {
    pub pose: ObjectPose,
    pub kind: ShapeKind,
    pub key_points: usize,
    pub ring_radius: f64,
    pub d_max: f64,
}

pub fn estimate_pose(cluster: &PointCloud, plane: &Plane, cfg: &PoseConfig) -> Result<PoseEstimate> {
    let projected = project_to_plane(cluster, plane);
    let (kind, yaw, fit) = infer_kind(&projected, cfg)?;
    let key_points = match detect_key_region(&projected, &cfg.key_region)? {
        KeyRegionOutcome::Protrusion(key) => key.points2d.len(),
        KeyRegionOutcome::Revolute(_) => 0,
    };
    let scale = estimate_scale(cluster, plane, cfg.heights.get(kind))?;
    Ok(PoseEstimate {
        pose: ObjectPose::new(fit.center, yaw, scale.alpha, *plane)?,
        kind,
        key_points,
        ring_radius: fit.radius,
        d_max: scale.d_max,
    })
}
