//! Evaluation metrics: chamfer distance and 2D principal component axes,
//! plus the uniform-grid nearest-neighbor index they share.

use crate::error::{Error, Result};
use crate::cloud::PointCloud;
use crate::math::{Vec2, Vec3};
use std::collections::HashMap;

/// Uniform-grid spatial index over a fixed point set.
///
/// Queries enumerate candidate cells in deterministic order; results do not
/// depend on hash iteration order.
pub struct GridIndex {
    points: Vec<Vec3>,
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl GridIndex {
    pub fn build(points: &[Vec3]) -> GridIndex {
        // Aim for a few points per cell from the bounding volume.
        let cell = match crate::math::Aabb::from_points(points) {
            Some(b) if points.len() > 1 => {
                let volume_guess = (b.diagonal() / 3f64.sqrt()).max(1e-6);
                (volume_guess / (points.len() as f64).cbrt()).max(1e-6)
            }
            _ => 1.0,
        };
        Self::build_with_cell(points, cell)
    }

    pub fn build_with_cell(points: &[Vec3], cell: f64) -> GridIndex {
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(Self::key(*p, cell))
                .or_default()
                .push(i as u32);
        }
        GridIndex {
            points: points.to_vec(),
            cell,
            cells,
        }
    }

    fn key(p: Vec3, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and distance of the nearest point to `q`.
    pub fn nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let (cx, cy, cz) = Self::key(q, self.cell);
        let mut best: Option<(usize, f64)> = None;
        let mut ring = 0i64;
        loop {
            let mut any_cell = false;
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                            any_cell = true;
                            for &i in ids {
                                let d = self.points[i as usize].distance(q);
                                // Strict less keeps the lowest index on ties.
                                if best.map_or(true, |(bi, bd)| d < bd || (d == bd && (i as usize) < bi)) {
                                    best = Some((i as usize, d));
                                }
                            }
                        }
                    }
                }
            }
            // Cells at Chebyshev ring r are at least (r-1)*cell away.
            if let Some((_, bd)) = best {
                if bd <= (ring as f64) * self.cell {
                    return best;
                }
            }
            if !any_cell && ring as f64 * self.cell > self.max_search_radius() {
                return best;
            }
            ring += 1;
            let _ = any_cell;
        }
    }

    fn max_search_radius(&self) -> f64 {
        crate::math::Aabb::from_points(&self.points)
            .map(|b| b.diagonal() + self.cell)
            .unwrap_or(1.0)
    }

    /// Indices of all points within `radius` of `q`, ascending index order.
    pub fn within_radius(&self, q: Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let r_cells = (radius / self.cell).ceil() as i64;
        let (cx, cy, cz) = Self::key(q, self.cell);
        for dx in -r_cells..=r_cells {
            for dy in -r_cells..=r_cells {
                for dz in -r_cells..=r_cells {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in ids {
                            if self.points[i as usize].distance(q) <= radius {
                                out.push(i as usize);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The k nearest point indices to `q` (ties broken by index).
    pub fn k_nearest(&self, q: Vec3, k: usize) -> Vec<usize> {
        let mut radius = self.cell;
        loop {
            let mut hits = self.within_radius(q, radius);
            if hits.len() >= k || radius > self.max_search_radius() {
                hits.sort_by(|&a, &b| {
                    self.points[a]
                        .distance(q)
                        .total_cmp(&self.points[b].distance(q))
                        .then(a.cmp(&b))
                });
                hits.truncate(k);
                return hits;
            }
            radius *= 2.0;
        }
    }
}

/// Symmetric chamfer distance: the average over both directions of the mean
/// nearest-neighbor distance, in meters.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let d_ab = directed_mean_nn(a.points(), b.points());
    let d_ba = directed_mean_nn(b.points(), a.points());
    Ok(0.5 * (d_ab + d_ba))
}

fn directed_mean_nn(from: &[Vec3], to: &[Vec3]) -> f64 {
    let index = GridIndex::build(to);
    let sum: f64 = from
        .iter()
        .map(|&p| index.nearest(p).expect("non-empty index").1)
        .sum();
    sum / from.len() as f64
}

/// Dominant axis and descending eigenvalues of the 2x2 covariance of the
/// given 2D points. The axis sign is fixed: nonnegative x component, ties
/// broken toward +y.
pub fn pca_axes(points: &[Vec2]) -> Result<(Vec2, [f64; 2])> {
    if points.len() < 2 {
        return Err(Error::Degenerate("pca needs >= 2 points".into()));
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec2::ZERO, |acc, &p| acc + p) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &p in points {
        let d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    sxx /= n;
    sxy /= n;
    syy /= n;
    if sxx == 0.0 && syy == 0.0 && sxy == 0.0 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    // Closed-form eigendecomposition of [[sxx, sxy], [sxy, syy]].
    let trace = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (trace * trace / 4.0 - det).max(0.0).sqrt();
    let l1 = trace / 2.0 + disc;
    let l2 = trace / 2.0 - disc;
    let axis = if sxy.abs() > 1e-300 {
        Vec2::new(l1 - syy, sxy)
    } else if sxx >= syy {
        Vec2::new(1.0, 0.0)
    } else {
        Vec2::new(0.0, 1.0)
    };
    let axis = axis
        .try_normalized()
        .ok_or_else(|| Error::Degenerate("pca axis underflow".into()))?;
    let axis = if axis.x < 0.0 || (axis.x == 0.0 && axis.y < 0.0) {
        -axis
    } else {
        axis
    };
    Ok((axis, [l1, l2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        PointCloud::from_points(pts).unwrap()
    }

    #[test]
    fn chamfer_identity_is_zero() {
        let c = random_cloud(128, 1);
        assert_eq!(chamfer(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_of_small_translation() {
        let c = random_cloud(64, 2);
        let d = 1e-4;
        let shifted = c.mapped(|p| p + Vec3::X * d, |n| n);
        assert_relative_eq!(chamfer(&c, &shifted).unwrap(), d, epsilon = 1e-9);
    }

    #[test]
    fn chamfer_matches_bruteforce() {
        let a = random_cloud(200, 3);
        let b = random_cloud(200, 4);
        let brute = |from: &PointCloud, to: &PointCloud| -> f64 {
            let s: f64 = from
                .points()
                .iter()
                .map(|&p| {
                    to.points()
                        .iter()
                        .map(|&q| p.distance(q))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum();
            s / from.len() as f64
        };
        let expected = 0.5 * (brute(&a, &b) + brute(&b, &a));
        assert_eq!(chamfer(&a, &b).unwrap(), expected);
    }

    #[test]
    fn chamfer_is_symmetric() {
        let a = random_cloud(100, 5);
        let b = random_cloud(150, 6);
        assert_eq!(chamfer(&a, &b).unwrap(), chamfer(&b, &a).unwrap());
    }

    #[test]
    fn chamfer_rejects_empty() {
        let a = random_cloud(10, 7);
        let empty = PointCloud::from_points(vec![]).unwrap();
        assert!(chamfer(&a, &empty).is_err());
    }

    #[test]
    fn pca_collinear_points() {
        let pts: Vec<Vec2> = (0..10).map(|i| Vec2::new(i as f64, 0.0)).collect();
        let (axis, eig) = pca_axes(&pts).unwrap();
        assert_relative_eq!(axis.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(axis.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(eig[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pca_rotation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec2> = (0..50)
            .map(|_| Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-0.5..0.5)))
            .collect();
        let (axis, _) = pca_axes(&pts).unwrap();
        let theta = 0.73;
        let rotated: Vec<Vec2> = pts.iter().map(|p| p.rotated(theta)).collect();
        let (axis_r, _) = pca_axes(&rotated).unwrap();
        let diff = crate::math::angle_difference(axis_r.angle(), axis.angle() + theta);
        // Axis is defined modulo pi.
        let diff = diff.abs().min((diff.abs() - std::f64::consts::PI).abs());
        assert!(diff < 1e-9, "axis rotated by {diff} off");
    }

    #[test]
    fn pca_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vec2> = (0..50)
            .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let (axis, eig) = pca_axes(&pts).unwrap();
        // Independent route: eigenvalues from the characteristic polynomial,
        // eigenvector by direct residual check.
        let n = pts.len() as f64;
        let mean = pts.iter().fold(Vec2::ZERO, |a, &p| a + p) / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for &p in &pts {
            let d = p - mean;
            sxx += d.x * d.x / n;
            sxy += d.x * d.y / n;
            syy += d.y * d.y / n;
        }
        let b = -(sxx + syy);
        let c = sxx * syy - sxy * sxy;
        let l1 = (-b + (b * b - 4.0 * c).sqrt()) / 2.0;
        let l2 = (-b - (b * b - 4.0 * c).sqrt()) / 2.0;
        assert_relative_eq!(eig[0], l1, epsilon = 1e-10);
        assert_relative_eq!(eig[1], l2, epsilon = 1e-10);
        // (Cov - l1 I) axis = 0
        let r1 = (sxx - l1) * axis.x + sxy * axis.y;
        let r2 = sxy * axis.x + (syy - l1) * axis.y;
        assert!(r1.abs() < 1e-10 && r2.abs() < 1e-10);
    }

    #[test]
    fn pca_is_deterministic() {
        let pts: Vec<Vec2> = (0..20)
            .map(|i| Vec2::new((i as f64 * 0.37).sin(), (i as f64 * 0.61).cos()))
            .collect();
        let a = pca_axes(&pts).unwrap();
        let b = pca_axes(&pts).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn pca_degenerate_errors() {
        let pts = vec![Vec2::new(1.0, 1.0); 5];
        assert!(pca_axes(&pts).is_err());
    }

    #[test]
    fn grid_index_nearest_matches_bruteforce() {
        let cloud = random_cloud(300, 10);
        let index = GridIndex::build(cloud.points());
        let queries = random_cloud(50, 11);
        for &q in queries.points() {
            let (i, d) = index.nearest(q).unwrap();
            let (bi, bd) = cloud
                .points()
                .iter()
                .enumerate()
                .map(|(j, &p)| (j, p.distance(q)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert_eq!(i, bi);
            assert_eq!(d, bd);
        }
    }
}
