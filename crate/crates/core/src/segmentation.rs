//! Desk-plane extraction and object instance segmentation.

use crate::error::{Error, Result};
use crate::cloud::{smallest_eigenvector_3x3, Plane, PointCloud};
use crate::math::Vec3;
use crate::metrics::GridIndex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub iterations: usize,
    pub inlier_threshold: f64,
    pub min_inlier_fraction: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            iterations: 256,
            inlier_threshold: 0.003,
            min_inlier_fraction: 0.15,
            seed: 0,
        }
    }
}

/// RANSAC plane fit refined by least squares over the inliers; the normal is
/// oriented toward +z (the scene's up hemisphere).
pub fn fit_plane_ransac(cloud: &PointCloud, cfg: &RansacConfig) -> Result<Plane> {
    let pts = cloud.points();
    if pts.len() < 3 {
        return Err(Error::Degenerate("plane fit needs >= 3 points".into()));
    }
    if cfg.iterations == 0 || cfg.inlier_threshold <= 0.0 {
        return Err(Error::InvalidConfig(format!("{cfg:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Vec3, f64)> = None;
    for _ in 0..cfg.iterations {
        let i = rng.gen_range(0..pts.len());
        let j = rng.gen_range(0..pts.len());
        let k = rng.gen_range(0..pts.len());
        if i == j || j == k || i == k {
            continue;
        }
        let n = (pts[j] - pts[i]).cross(pts[k] - pts[i]);
        let Some(n) = n.try_normalized() else {
            continue; // collinear sample
        };
        let offset = n.dot(pts[i]);
        let count = pts
            .iter()
            .filter(|p| (n.dot(**p) - offset).abs() <= cfg.inlier_threshold)
            .count();
        if best.map_or(true, |(c, _, _)| count > c) {
            best = Some((count, n, offset));
        }
    }
    let (count, n, offset) =
        best.ok_or_else(|| Error::Degenerate("all RANSAC samples degenerate".into()))?;
    let fraction = count as f64 / pts.len() as f64;
    if fraction < cfg.min_inlier_fraction {
        return Err(Error::NoDominantPlane {
            found: fraction,
            required: cfg.min_inlier_fraction,
        });
    }
    // Least-squares refinement: two rounds of covariance fit over inliers.
    let mut normal = n;
    let mut off = offset;
    for _ in 0..2 {
        let inliers: Vec<Vec3> = pts
            .iter()
            .copied()
            .filter(|p| (normal.dot(*p) - off).abs() <= cfg.inlier_threshold)
            .collect();
        if inliers.len() < 3 {
            break;
        }
        let centroid = inliers.iter().fold(Vec3::ZERO, |a, &p| a + p) / inliers.len() as f64;
        let mut cov = [[0.0; 3]; 3];
        for p in &inliers {
            let d = *p - centroid;
            let v = [d.x, d.y, d.z];
            for r in 0..3 {
                for c in 0..3 {
                    cov[r][c] += v[r] * v[c];
                }
            }
        }
        normal = smallest_eigenvector_3x3(&cov);
        off = normal.dot(centroid);
    }
    if normal.z < 0.0 {
        normal = -normal;
        off = -off;
    }
    Plane::new(normal, off)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    /// Fixed-radius connectivity for region growing.
    pub radius: f64,
    pub min_cluster_size: usize,
    /// A cluster must have a point within this distance of the plane.
    pub adjacency_band: f64,
    /// Points within this distance of the plane are treated as plane points
    /// and removed before clustering (default 1.5x the RANSAC threshold, so
    /// desk-contact rings don't bridge adjacent objects).
    pub plane_margin: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            radius: 0.008,
            min_cluster_size: 60,
            adjacency_band: 0.015,
            plane_margin: 0.0045,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cluster {
    pub id: usize,
    pub cloud: PointCloud,
    /// Indices into the input cloud.
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub plane: Plane,
    pub clusters: Vec<Cluster>,
    /// Non-plane points that were filtered out (small clusters, floaters).
    pub rejected: PointCloud,
    pub rejected_indices: Vec<usize>,
    /// Indices of removed plane points.
    pub plane_indices: Vec<usize>,
}

/// Remove plane points, grow fixed-radius connected components, and keep the
/// components that are large enough and touch the adjacency band above the
/// plane. Cluster ids are canonical: sorted by centroid (x, y, z).
pub fn segment_objects(cloud: &PointCloud, plane: &Plane, cfg: &SegmentConfig) -> Segmentation {
    let pts = cloud.points();
    let mut plane_indices = Vec::new();
    let mut object_indices = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        if plane.signed_distance(*p).abs() <= cfg.plane_margin {
            plane_indices.push(i);
        } else {
            object_indices.push(i);
        }
    }
    let object_points: Vec<Vec3> = object_indices.iter().map(|&i| pts[i]).collect();
    let index = GridIndex::build_with_cell(&object_points, cfg.radius.max(1e-6));

    // BFS connected components over fixed-radius adjacency.
    let mut component = vec![usize::MAX; object_points.len()];
    let mut n_components = 0;
    for start in 0..object_points.len() {
        if component[start] != usize::MAX {
            continue;
        }
        let comp = n_components;
        n_components += 1;
        let mut queue = std::collections::VecDeque::from([start]);
        component[start] = comp;
        while let Some(cur) = queue.pop_front() {
            for nb in index.within_radius(object_points[cur], cfg.radius) {
                if component[nb] == usize::MAX {
                    component[nb] = comp;
                    queue.push_back(nb);
                }
            }
        }
    }

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_components];
    for (local, &comp) in component.iter().enumerate() {
        groups[comp].push(object_indices[local]);
    }

    let mut kept: Vec<Vec<usize>> = Vec::new();
    let mut rejected_indices = Vec::new();
    for group in groups {
        let touches_plane = group
            .iter()
            .any(|&i| plane.signed_distance(pts[i]).abs() <= cfg.adjacency_band);
        if group.len() >= cfg.min_cluster_size && touches_plane {
            kept.push(group);
        } else {
            rejected_indices.extend(group);
        }
    }
    rejected_indices.sort_unstable();

    // Canonical instance order: centroid lexicographic.
    let centroid = |group: &[usize]| {
        let sum = group.iter().fold(Vec3::ZERO, |a, &i| a + pts[i]);
        sum / group.len() as f64
    };
    kept.sort_by(|a, b| {
        let ca = centroid(a);
        let cb = centroid(b);
        ca.x.total_cmp(&cb.x)
            .then(ca.y.total_cmp(&cb.y))
            .then(ca.z.total_cmp(&cb.z))
    });

    let clusters = kept
        .into_iter()
        .enumerate()
        .map(|(id, mut indices)| {
            indices.sort_unstable();
            Cluster {
                id,
                cloud: cloud.select(&indices),
                indices,
            }
        })
        .collect();
    Segmentation {
        plane: *plane,
        clusters,
        rejected: cloud.select(&rejected_indices),
        rejected_indices,
        plane_indices,
    }
}

/// Per-instance summary written next to the exported cluster files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub plane_normal: [f64; 3],
    pub plane_offset: f64,
    pub instances: Vec<InstanceSummary>,
    pub rejected_points: usize,
    pub plane_points: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub id: usize,
    pub points: usize,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
}

impl Segmentation {
    pub fn report(&self) -> SegmentationReport {
        let n = self.plane.normal();
        SegmentationReport {
            plane_normal: [n.x, n.y, n.z],
            plane_offset: self.plane.offset(),
            instances: self
                .clusters
                .iter()
                .map(|c| {
                    let b = c.cloud.bounds().expect("clusters are non-empty");
                    InstanceSummary {
                        id: c.id,
                        points: c.cloud.len(),
                        bbox_min: [b.min.x, b.min.y, b.min.z],
                        bbox_max: [b.max.x, b.max.y, b.max.z],
                    }
                })
                .collect(),
            rejected_points: self.rejected.len(),
            plane_points: self.plane_indices.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid_plane(z: f64, n: usize) -> Vec<Vec3> {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(Vec3::new(
                    i as f64 / n as f64 - 0.5,
                    j as f64 / n as f64 - 0.5,
                    z,
                ));
            }
        }
        pts
    }

    #[test]
    fn exact_plane_recovered() {
        let cloud = PointCloud::from_points(grid_plane(0.1, 20)).unwrap();
        let plane = fit_plane_ransac(&cloud, &RansacConfig::default()).unwrap();
        assert_relative_eq!(plane.normal().z, 1.0, epsilon = 1e-9);
        assert_relative_eq!(plane.offset(), 0.1, epsilon = 1e-9);
    }

    #[test]
    fn noisy_plane_with_outliers_monte_carlo() {
        let mut failures = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
            let mut pts = Vec::new();
            for _ in 0..600 {
                pts.push(Vec3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.001..0.001),
                ));
            }
            // 40% outliers
            for _ in 0..400 {
                pts.push(Vec3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(0.01..0.3),
                ));
            }
            let cloud = PointCloud::from_points(pts).unwrap();
            let cfg = RansacConfig {
                seed,
                ..RansacConfig::default()
            };
            let plane = fit_plane_ransac(&cloud, &cfg).unwrap();
            let angle = plane.normal().dot(Vec3::Z).clamp(-1.0, 1.0).acos();
            if angle.to_degrees() >= 1.0 {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures} / 100 trials above 1 degree");
    }

    #[test]
    fn collinear_input_is_error() {
        let pts: Vec<Vec3> = (0..50).map(|i| Vec3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        let cloud = PointCloud::from_points(pts).unwrap();
        assert!(fit_plane_ransac(&cloud, &RansacConfig::default()).is_err());
    }

    fn two_blob_cloud() -> (PointCloud, usize) {
        // Desk plane plus two tight blobs separated by ~3x radius.
        let mut pts = grid_plane(0.0, 30);
        let n_plane = pts.len();
        for i in 0..100 {
            let a = i as f64 * 0.1;
            pts.push(Vec3::new(
                0.1 + 0.002 * a.cos(),
                0.1 + 0.002 * a.sin(),
                0.01 + 0.0005 * (i % 40) as f64,
            ));
        }
        for i in 0..100 {
            let a = i as f64 * 0.1;
            pts.push(Vec3::new(
                -0.15 + 0.002 * a.cos(),
                -0.1 + 0.002 * a.sin(),
                0.01 + 0.0005 * (i % 40) as f64,
            ));
        }
        (PointCloud::from_points(pts).unwrap(), n_plane)
    }

    #[test]
    fn two_separated_clusters() {
        let (cloud, n_plane) = two_blob_cloud();
        let plane = fit_plane_ransac(&cloud, &RansacConfig::default()).unwrap();
        let seg = segment_objects(&cloud, &plane, &SegmentConfig {
            min_cluster_size: 50,
            ..SegmentConfig::default()
        });
        assert_eq!(seg.clusters.len(), 2);
        // Point labels: all indices >= n_plane, split by blob membership.
        for c in &seg.clusters {
            assert_eq!(c.cloud.len(), 100);
            assert!(c.indices.iter().all(|&i| i >= n_plane));
            let first_blob = c.indices[0] < n_plane + 100;
            assert!(c
                .indices
                .iter()
                .all(|&i| (i < n_plane + 100) == first_blob));
        }
    }

    #[test]
    fn floating_blob_is_rejected() {
        let (mut pts, _) = {
            let (c, n) = two_blob_cloud();
            (c.points().to_vec(), n)
        };
        let floater_start = pts.len();
        for i in 0..80 {
            let a = i as f64 * 0.37;
            pts.push(Vec3::new(
                0.2 + 0.003 * a.cos(),
                -0.2 + 0.003 * a.sin(),
                0.10 + 0.0004 * i as f64,
            ));
        }
        let cloud = PointCloud::from_points(pts).unwrap();
        let plane = fit_plane_ransac(&cloud, &RansacConfig::default()).unwrap();
        let seg = segment_objects(&cloud, &plane, &SegmentConfig {
            min_cluster_size: 50,
            ..SegmentConfig::default()
        });
        assert_eq!(seg.clusters.len(), 2);
        assert!(seg.rejected_indices.iter().any(|&i| i >= floater_start));
    }

    #[test]
    fn partition_is_exact() {
        let (cloud, _) = two_blob_cloud();
        let plane = fit_plane_ransac(&cloud, &RansacConfig::default()).unwrap();
        let seg = segment_objects(&cloud, &plane, &SegmentConfig::default());
        let mut all: Vec<usize> = seg.plane_indices.clone();
        all.extend(seg.rejected_indices.iter());
        for c in &seg.clusters {
            all.extend(c.indices.iter());
        }
        all.sort_unstable();
        let expect: Vec<usize> = (0..cloud.len()).collect();
        assert_eq!(all, expect);
    }

    #[test]
    fn clusters_agree_with_bruteforce_components() {
        let (cloud, _) = two_blob_cloud();
        let plane = fit_plane_ransac(&cloud, &RansacConfig::default()).unwrap();
        let cfg = SegmentConfig::default();
        let seg = segment_objects(&cloud, &plane, &cfg);
        // Brute-force adjacency over the non-plane points.
        let pts = cloud.points();
        let object: Vec<usize> = (0..pts.len())
            .filter(|&i| plane.signed_distance(pts[i]).abs() > cfg.plane_margin)
            .collect();
        let mut comp: Vec<usize> = (0..object.len()).collect();
        fn find(comp: &mut Vec<usize>, i: usize) -> usize {
            if comp[i] != i {
                let root = find(comp, comp[i]);
                comp[i] = root;
            }
            comp[i]
        }
        for a in 0..object.len() {
            for b in a + 1..object.len() {
                if pts[object[a]].distance(pts[object[b]]) <= cfg.radius {
                    let (ra, rb) = (find(&mut comp, a), find(&mut comp, b));
                    if ra != rb {
                        comp[ra] = rb;
                    }
                }
            }
        }
        use std::collections::BTreeMap;
        let mut brute: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..object.len() {
            let root = find(&mut comp, i);
            brute.entry(root).or_default().push(object[i]);
        }
        let mut brute_sets: Vec<Vec<usize>> = brute
            .into_values()
            .filter(|g| g.len() >= cfg.min_cluster_size)
            .collect();
        brute_sets.iter_mut().for_each(|g| g.sort_unstable());
        brute_sets.sort();
        let mut got: Vec<Vec<usize>> = seg.clusters.iter().map(|c| c.indices.clone()).collect();
        got.sort();
        assert_eq!(got, brute_sets);
    }

    #[test]
    fn permutation_only_relabels() {
        let (cloud, _) = two_blob_cloud();
        let plane = fit_plane_ransac(&cloud, &RansacConfig::default()).unwrap();
        let seg_a = segment_objects(&cloud, &plane, &SegmentConfig::default());
        // Reverse the point order.
        let reversed: Vec<Vec3> = cloud.points().iter().rev().copied().collect();
        let cloud_b = PointCloud::from_points(reversed).unwrap();
        let seg_b = segment_objects(&cloud_b, &plane, &SegmentConfig::default());
        assert_eq!(seg_a.clusters.len(), seg_b.clusters.len());
        // Canonical centroid order makes cluster k correspond to cluster k.
        for (a, b) in seg_a.clusters.iter().zip(&seg_b.clusters) {
            let ca = a.cloud.centroid().unwrap();
            let cb = b.cloud.centroid().unwrap();
            assert!(ca.distance(cb) < 1e-12);
        }
    }
}
