//! Antipodal grasp candidate generation and deterministic geometric scoring
//! for a two-finger parallel gripper.

use crate::error::{Error, Result};
use crate::cloud::{Plane, PointCloud};
use crate::math::Vec3;
use crate::metrics::GridIndex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperModel {
    pub max_width: f64,
    pub finger_length: f64,
    pub finger_thickness: f64,
    pub palm_depth: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        GripperModel {
            max_width: 0.085,
            finger_length: 0.045,
            finger_thickness: 0.01,
            palm_depth: 0.02,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        if self.max_width <= 0.0
            || self.finger_length <= 0.0
            || self.finger_thickness <= 0.0
            || self.palm_depth <= 0.0
            || self.max_width <= 2.0 * self.finger_thickness
        {
            return Err(Error::InvalidConfig(format!("gripper {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspConfig {
    /// Friction cone half-angle, degrees.
    pub friction_cone_deg: f64,
    /// Maximum number of candidates returned.
    pub candidate_budget: usize,
    /// Planned opening beyond the contact separation (total, both sides).
    pub width_clearance: f64,
    /// Hard minimum opening slack; pairs closer to max width are dropped.
    pub min_width_slack: f64,
    /// Minimum contact separation.
    pub min_separation: f64,
    /// Contact-patch coverage radius and its saturation count.
    pub coverage_radius: f64,
    pub coverage_ref: usize,
    /// Collision margin that saturates the margin quality factor.
    pub margin_ref: f64,
    /// Length of the straight-line approach sweep behind the gripper.
    pub sweep_length: f64,
    /// How far fingertips extend past the contact line.
    pub tip_extension: f64,
    pub seed: u64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        GraspConfig {
            friction_cone_deg: 18.0,
            candidate_budget: 512,
            width_clearance: 0.006,
            min_width_slack: 0.002,
            min_separation: 0.004,
            coverage_radius: 0.01,
            coverage_ref: 12,
            margin_ref: 0.01,
            sweep_length: 0.12,
            tip_extension: 0.005,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub id: usize,
    /// Midpoint of the two contacts.
    pub center: Vec3,
    /// Unit vector the gripper travels along toward the grasp.
    pub approach: Vec3,
    /// Unit closing axis, orthogonal to the approach.
    pub closing: Vec3,
    /// Planned opening width.
    pub width: f64,
    pub contacts: [Vec3; 2],
    pub contact_normals: [Vec3; 2],
    /// Worst angle between a contact normal and the closing axis, radians.
    pub antipodal_angle: f64,
    /// Signed clearance to the scene; negative means penetration. Filled by
    /// collision checking.
    pub margin: f64,
    /// Composite quality in [0, 1]. Filled by scoring.
    pub score: f64,
}

/// Enumerate antipodal contact pairs on an object cloud with normals and turn
/// the best pair per seeded anchor into a grasp candidate.
pub fn sample_grasps(
    cloud: &PointCloud,
    gripper: &GripperModel,
    cfg: &GraspConfig,
) -> Result<Vec<GraspCandidate>> {
    gripper.validate()?;
    let normals = cloud
        .normals()
        .ok_or_else(|| Error::InvalidCloud("grasp sampling needs normals".into()))?;
    let points = cloud.points();
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let index = GridIndex::build(points);
    let cos_cone = cfg.friction_cone_deg.to_radians().cos();
    let max_sep = gripper.max_width - cfg.min_width_slack;
    let mut anchors: Vec<usize> = (0..points.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    anchors.shuffle(&mut rng);

    let mut out = Vec::new();
    for &i in &anchors {
        if out.len() >= cfg.candidate_budget {
            break;
        }
        let p_i = points[i];
        let n_i = normals[i];
        let mut best: Option<(usize, f64)> = None;
        for j in index.within_radius(p_i, max_sep) {
            if j == i {
                continue;
            }
            let d = points[j].distance(p_i);
            if d < cfg.min_separation {
                continue;
            }
            let u = (points[j] - p_i) / d;
            let cos_i = n_i.dot(-u);
            let cos_j = normals[j].dot(u);
            if cos_i < cos_cone || cos_j < cos_cone {
                continue;
            }
            let quality = cos_i + cos_j;
            if best.map_or(true, |(bj, bq)| quality > bq || (quality == bq && j < bj)) {
                best = Some((j, quality));
            }
        }
        let Some((j, _)) = best else {
            continue;
        };
        let d = points[j].distance(p_i);
        let u = (points[j] - p_i) / d;
        let approach = approach_for(u);
        let angle_i = normals[i].dot(-u).clamp(-1.0, 1.0).acos();
        let angle_j = normals[j].dot(u).clamp(-1.0, 1.0).acos();
        out.push(GraspCandidate {
            id: out.len(),
            center: (p_i + points[j]) * 0.5,
            approach,
            closing: u,
            width: (d + cfg.width_clearance).min(gripper.max_width),
            contacts: [p_i, points[j]],
            contact_normals: [normals[i], normals[j]],
            antipodal_angle: angle_i.max(angle_j),
            margin: f64::INFINITY,
            score: 0.0,
        });
    }
    Ok(out)
}

/// Approach direction orthogonal to the closing axis, preferring descent from
/// above; a near-vertical closing axis gets a horizontal approach.
fn approach_for(closing: Vec3) -> Vec3 {
    let down = -Vec3::Z;
    let projected = down - closing * down.dot(closing);
    match projected.try_normalized() {
        Some(a) if projected.norm() > 0.2 => a,
        _ => closing
            .cross(Vec3::Z)
            .try_normalized()
            .unwrap_or(Vec3::X),
    }
}

/// The three boxes of the swept gripper volume in grasp-local coordinates
/// (closing, approach, binormal), as (center, half-extents).
fn gripper_boxes(candidate: &GraspCandidate, gripper: &GripperModel, cfg: &GraspConfig) -> [(Vec3, Vec3); 3] {
    let w = candidate.width;
    let t = gripper.finger_thickness;
    let tip = cfg.tip_extension;
    let a_back = tip - gripper.finger_length - cfg.sweep_length;
    let finger_a_center = (tip + a_back) / 2.0;
    let finger_a_half = (tip - a_back) / 2.0;
    let palm_front = tip - gripper.finger_length;
    let palm_back = palm_front - gripper.palm_depth - cfg.sweep_length;
    [
        (
            Vec3::new(w / 2.0 + t / 2.0, finger_a_center, 0.0),
            Vec3::new(t / 2.0, finger_a_half, t / 2.0),
        ),
        (
            Vec3::new(-w / 2.0 - t / 2.0, finger_a_center, 0.0),
            Vec3::new(t / 2.0, finger_a_half, t / 2.0),
        ),
        (
            Vec3::new(0.0, (palm_front + palm_back) / 2.0, 0.0),
            Vec3::new(w / 2.0 + t, (palm_front - palm_back) / 2.0, t),
        ),
    ]
}

fn sd_box_local(p: Vec3, center: Vec3, half: Vec3) -> f64 {
    let q = (p - center).abs() - half;
    let outside = q.max_componentwise(Vec3::ZERO).norm();
    q.max_element().min(0.0) + outside
}

/// Signed clearance between the swept gripper volume and the scene cloud:
/// the minimum over scene points of the distance to the volume, negative for
/// penetration depth.
pub fn check_collision(
    candidate: &GraspCandidate,
    scene: &PointCloud,
    gripper: &GripperModel,
    cfg: &GraspConfig,
) -> f64 {
    let u = candidate.closing;
    let a = candidate.approach;
    let b = u.cross(a).normalized();
    let boxes = gripper_boxes(candidate, gripper, cfg);
    scene
        .points()
        .par_iter()
        .map(|&p| {
            let rel = p - candidate.center;
            let local = Vec3::new(rel.dot(u), rel.dot(a), rel.dot(b));
            boxes
                .iter()
                .map(|(c, h)| sd_box_local(local, *c, *h))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Composite quality: antipodal angle, contact coverage, and clamped
/// collision margin, each in [0, 1]. Zero whenever the margin is negative.
pub fn score_grasp(candidate: &GraspCandidate, object: &PointCloud, cfg: &GraspConfig) -> f64 {
    let index = GridIndex::build(object.points());
    score_with_index(candidate, &index, cfg)
}

fn score_with_index(candidate: &GraspCandidate, object: &GridIndex, cfg: &GraspConfig) -> f64 {
    if candidate.margin < 0.0 {
        return 0.0;
    }
    let theta_f = cfg.friction_cone_deg.to_radians();
    let q_angle = (1.0 - candidate.antipodal_angle / theta_f).clamp(0.0, 1.0);
    let mut coverage = 0.0;
    for contact in candidate.contacts {
        let n = object.within_radius(contact, cfg.coverage_radius).len();
        coverage += (n as f64 / cfg.coverage_ref as f64).min(1.0);
    }
    let q_cov = coverage / 2.0;
    let q_margin = (candidate.margin / cfg.margin_ref).clamp(0.0, 1.0);
    q_angle * q_cov * q_margin
}

/// Collision-check and score a batch of candidates in place, then sort by
/// (score desc, id asc).
pub fn score_grasps(
    candidates: &mut Vec<GraspCandidate>,
    object: &PointCloud,
    scene: &PointCloud,
    gripper: &GripperModel,
    cfg: &GraspConfig,
) {
    let index = GridIndex::build(object.points());
    for c in candidates.iter_mut() {
        c.margin = check_collision(c, scene, gripper, cfg);
        c.score = score_with_index(c, &index, cfg);
    }
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
}

/// Descending-sort score statistics in the report format: maximum, top-5 and
/// top-10 means, top-5 and top-10 population variances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub max: f64,
    pub mean_top5: f64,
    pub mean_top10: f64,
    pub var_top5: f64,
    pub var_top10: f64,
}

pub fn score_stats(scores: &[f64]) -> Result<ScoreStats> {
    if scores.is_empty() {
        return Err(Error::Degenerate("score stats need >= 1 score".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = |k: usize| &sorted[..k.min(sorted.len())];
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let var = |s: &[f64]| {
        let m = mean(s);
        s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / s.len() as f64
    };
    Ok(ScoreStats {
        max: sorted[0],
        mean_top5: mean(top(5)),
        mean_top10: mean(top(10)),
        var_top5: var(top(5)),
        var_top10: var(top(10)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityConfig {
    /// Minimum clearance against the true geometry, meters.
    pub margin_min: f64,
    /// Clearance required between the retreat line and the desk plane.
    pub desk_clearance: f64,
}

impl Default for ValidityConfig {
    fn default() -> Self {
        ValidityConfig {
            margin_min: 0.002,
            desk_clearance: 0.005,
        }
    }
}

/// Execution proxy: the grasp must clear the true geometry by `margin_min`,
/// be antipodal within the friction cone, fit the gripper, and approach
/// without crossing the desk plane.
pub fn execution_validity(
    candidate: &GraspCandidate,
    truth: &PointCloud,
    gripper: &GripperModel,
    desk: &Plane,
    cfg: &GraspConfig,
    validity: &ValidityConfig,
) -> bool {
    let margin_gt = check_collision(candidate, truth, gripper, cfg);
    if margin_gt < validity.margin_min {
        return false;
    }
    if candidate.antipodal_angle > cfg.friction_cone_deg.to_radians() {
        return false;
    }
    if !(candidate.width > 0.0 && candidate.width <= gripper.max_width) {
        return false;
    }
    // The retreat line from the grasp back along the approach must stay above
    // the desk; heights are linear, so the endpoints suffice.
    let retreat = gripper.finger_length + gripper.palm_depth + cfg.sweep_length;
    let start = candidate.center;
    let end = candidate.center - candidate.approach * retreat;
    desk.signed_distance(start) > validity.desk_clearance
        && desk.signed_distance(end) > validity.desk_clearance
}

/// Fraction of the top-k candidates (by score) that are executable.
pub fn validity_fraction(
    candidates: &[GraspCandidate],
    top_k: usize,
    truth: &PointCloud,
    gripper: &GripperModel,
    desk: &Plane,
    cfg: &GraspConfig,
    validity: &ValidityConfig,
) -> Option<f64> {
    let mut ranked: Vec<&GraspCandidate> = candidates.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    let top: Vec<&GraspCandidate> = ranked.into_iter().take(top_k).collect();
    if top.is_empty() {
        return None;
    }
    let valid = top
        .iter()
        .filter(|c| execution_validity(c, truth, gripper, desk, cfg, validity))
        .count();
    Some(valid as f64 / top.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::sample_surface;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn cylinder_cloud(radius: f64) -> PointCloud {
        let spec = crate::shapes::ShapeSpec::CylindricalCup {
            radius,
            height: 0.10,
            wall: None,
        };
        sample_surface(&spec, 1500, 3).unwrap()
    }

    #[test]
    fn cylinder_yields_candidates_near_diameter() {
        let cloud = cylinder_cloud(0.04);
        let candidates =
            sample_grasps(&cloud, &GripperModel::default(), &GraspConfig::default()).unwrap();
        assert!(!candidates.is_empty());
        let wall_grasps: Vec<&GraspCandidate> = candidates
            .iter()
            .filter(|c| c.contacts[0].z > 0.01 && (c.contacts[0] - c.contacts[1]).xy().norm() > 0.07)
            .collect();
        assert!(!wall_grasps.is_empty());
        for c in wall_grasps {
            assert!((c.width - 0.08).abs() < 0.006, "width {}", c.width);
        }
    }

    #[test]
    fn oversized_object_yields_no_candidates() {
        // Diameter 0.09 against max opening 0.085.
        let cloud = cylinder_cloud(0.045);
        let candidates =
            sample_grasps(&cloud, &GripperModel::default(), &GraspConfig::default()).unwrap();
        let across: Vec<&GraspCandidate> = candidates
            .iter()
            .filter(|c| c.contacts[0].distance(c.contacts[1]) > 0.085)
            .collect();
        assert!(across.is_empty());
        // A side wall has no antipodal partner within the opening at all:
        // every surviving pair must be a top-rim or bottom pinch, which a
        // solid cylinder does not offer.
        assert!(candidates.is_empty(), "{} candidates", candidates.len());
    }

    #[test]
    fn candidates_are_antipodal_and_orthogonal() {
        let cloud = cylinder_cloud(0.04);
        let cfg = GraspConfig::default();
        let candidates = sample_grasps(&cloud, &GripperModel::default(), &cfg).unwrap();
        let theta = cfg.friction_cone_deg.to_radians();
        for c in &candidates {
            let u = c.closing;
            assert_relative_eq!(u.norm(), 1.0, epsilon = 1e-9);
            assert_relative_eq!(c.approach.norm(), 1.0, epsilon = 1e-9);
            assert!(c.approach.dot(u).abs() < 1e-9);
            let a0 = c.contact_normals[0].dot(-u).clamp(-1.0, 1.0).acos();
            let a1 = c.contact_normals[1].dot(u).clamp(-1.0, 1.0).acos();
            assert!(a0 <= theta + 1e-12 && a1 <= theta + 1e-12);
            assert!(c.antipodal_angle >= a0.max(a1) - 1e-12);
        }
    }

    fn free_space_candidate() -> GraspCandidate {
        GraspCandidate {
            id: 0,
            center: Vec3::new(0.0, 0.0, 0.3),
            approach: -Vec3::Z,
            closing: Vec3::X,
            width: 0.06,
            contacts: [Vec3::new(-0.03, 0.0, 0.3), Vec3::new(0.03, 0.0, 0.3)],
            contact_normals: [-Vec3::X, Vec3::X],
            antipodal_angle: 0.0,
            margin: f64::INFINITY,
            score: 0.0,
        }
    }

    #[test]
    fn empty_space_margin_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec3> = (0..200)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.2..0.0),
                )
            })
            .collect();
        let scene = PointCloud::from_points(pts.clone()).unwrap();
        let candidate = free_space_candidate();
        let gripper = GripperModel::default();
        let cfg = GraspConfig::default();
        let margin = check_collision(&candidate, &scene, &gripper, &cfg);
        assert!(margin > 0.0);
        // Independent oracle: distance to each box via closest-point clamp.
        let u = candidate.closing;
        let a = candidate.approach;
        let b = u.cross(a);
        let boxes = gripper_boxes(&candidate, &gripper, &cfg);
        let brute = pts
            .iter()
            .map(|&p| {
                let rel = p - candidate.center;
                let local = Vec3::new(rel.dot(u), rel.dot(a), rel.dot(b));
                boxes
                    .iter()
                    .map(|(c, h)| {
                        let clamped = Vec3::new(
                            (local.x - c.x).clamp(-h.x, h.x),
                            (local.y - c.y).clamp(-h.y, h.y),
                            (local.z - c.z).clamp(-h.z, h.z),
                        );
                        (local - (*c + clamped)).norm()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(margin, brute, epsilon = 1e-12);
    }

    #[test]
    fn point_inside_finger_gives_negative_margin() {
        let candidate = free_space_candidate();
        let gripper = GripperModel::default();
        let cfg = GraspConfig::default();
        // Inside the +x finger box.
        let inside = candidate.center + candidate.closing * (candidate.width / 2.0 + 0.004);
        let scene = PointCloud::from_points(vec![inside]).unwrap();
        assert!(check_collision(&candidate, &scene, &gripper, &cfg) < 0.0);
    }

    #[test]
    fn margin_monotone_under_point_removal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts: Vec<Vec3> = (0..300)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(0.0..0.5),
                )
            })
            .collect();
        let candidate = free_space_candidate();
        let gripper = GripperModel::default();
        let cfg = GraspConfig::default();
        let full = PointCloud::from_points(pts.clone()).unwrap();
        let m_full = check_collision(&candidate, &full, &gripper, &cfg);
        let half = PointCloud::from_points(pts[..150].to_vec()).unwrap();
        let m_half = check_collision(&candidate, &half, &gripper, &cfg);
        assert!(m_half >= m_full);
    }

    #[test]
    fn penetrating_candidate_scores_zero() {
        let cloud = cylinder_cloud(0.04);
        let mut candidate = free_space_candidate();
        candidate.margin = -0.001;
        assert_eq!(score_grasp(&candidate, &cloud, &GraspConfig::default()), 0.0);
    }

    #[test]
    fn ideal_grasp_scores_high_and_coverage_is_monotone() {
        let cloud = cylinder_cloud(0.04);
        let cfg = GraspConfig::default();
        let mut candidate = GraspCandidate {
            id: 0,
            center: Vec3::new(0.0, 0.0, 0.05),
            approach: -Vec3::Z,
            closing: Vec3::X,
            width: 0.085,
            contacts: [Vec3::new(-0.04, 0.0, 0.05), Vec3::new(0.04, 0.0, 0.05)],
            contact_normals: [-Vec3::X, Vec3::X],
            antipodal_angle: 0.0,
            margin: 0.05,
            score: 0.0,
        };
        let full = score_grasp(&candidate, &cloud, &cfg);
        assert!(full >= 0.9, "score {full}");
        // Remove points near one contact: score drops.
        let sparser = crate::scenegen::remove_sphere(&cloud, candidate.contacts[0], 0.008).unwrap();
        let degraded = score_grasp(&candidate, &sparser, &cfg);
        assert!(degraded < full);
        // Lower margin: score drops further.
        candidate.margin = 0.002;
        let tight = score_grasp(&candidate, &sparser, &cfg);
        assert!(tight < degraded);
    }

    #[test]
    fn stats_of_single_score() {
        let s = score_stats(&[0.9]).unwrap();
        assert_eq!(s.max, 0.9);
        assert_eq!(s.mean_top5, 0.9);
        assert_eq!(s.mean_top10, 0.9);
        assert_eq!(s.var_top5, 0.0);
        assert_eq!(s.var_top10, 0.0);
    }

    #[test]
    fn stats_match_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = rng.gen_range(1..30);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let stats = score_stats(&scores).unwrap();
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let top5 = &sorted[..5.min(sorted.len())];
            let top10 = &sorted[..10.min(sorted.len())];
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            let var = |s: &[f64]| {
                let m = mean(s);
                s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / s.len() as f64
            };
            assert_eq!(stats.max, sorted[0]);
            assert_eq!(stats.mean_top5, mean(top5));
            assert_eq!(stats.mean_top10, mean(top10));
            assert_eq!(stats.var_top5, var(top5));
            assert_eq!(stats.var_top10, var(top10));
        }
    }

    #[test]
    fn stats_reject_empty() {
        assert!(score_stats(&[]).is_err());
    }

    #[test]
    fn validity_gates_penetration_and_desk() {
        let gripper = GripperModel::default();
        let cfg = GraspConfig::default();
        let validity = ValidityConfig::default();
        let desk = Plane::new(Vec3::Z, 0.0).unwrap();
        let truth = cylinder_cloud(0.04);
        // Side grasp on the upper wall, approaching from above.
        let candidate = GraspCandidate {
            id: 0,
            center: Vec3::new(0.0, 0.0, 0.08),
            approach: -Vec3::Z,
            closing: Vec3::X,
            width: 0.085,
            contacts: [Vec3::new(-0.04, 0.0, 0.08), Vec3::new(0.04, 0.0, 0.08)],
            contact_normals: [-Vec3::X, Vec3::X],
            antipodal_angle: 0.05,
            margin: 0.0,
            score: 0.5,
        };
        assert!(execution_validity(&candidate, &truth, &gripper, &desk, &cfg, &validity));
        // Penetrating version: fingers close onto a wider body.
        let mut tight = candidate.clone();
        tight.width = 0.075;
        assert!(!execution_validity(&tight, &truth, &gripper, &desk, &cfg, &validity));
        // Approach crossing the desk: horizontal closing, downward retreat.
        let mut through_desk = candidate.clone();
        through_desk.center = Vec3::new(0.0, 0.0, 0.01);
        through_desk.approach = Vec3::Z; // retreats downward through the desk
        assert!(!execution_validity(
            &through_desk,
            &truth,
            &gripper,
            &desk,
            &cfg,
            &validity
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let cloud = cylinder_cloud(0.035);
        let a = sample_grasps(&cloud, &GripperModel::default(), &GraspConfig::default()).unwrap();
        let b = sample_grasps(&cloud, &GripperModel::default(), &GraspConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
