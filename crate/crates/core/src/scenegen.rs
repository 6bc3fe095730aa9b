//! Procedural tabletop scenes: ground-truth clouds, an analytic scene SDF /
//! opacity model, and the degradation used to simulate sparse, incomplete
//! reconstructions of transparent objects.

use crate::error::{Error, Result};
use crate::cloud::PointCloud;
use crate::field::OpacityModel;
use crate::math::{Aabb, Vec2, Vec3};
use crate::shapes::{sample_surface, sdf_eval, ShapeSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeskSpec {
    pub half_extent: Vec2,
    pub thickness: f64,
    /// Material opacity, 1/m.
    pub opacity: f64,
}

impl Default for DeskSpec {
    fn default() -> Self {
        DeskSpec {
            half_extent: Vec2::new(0.35, 0.35),
            thickness: 0.02,
            opacity: 200.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub position: Vec2,
    pub yaw: f64,
}

impl Placement {
    pub fn to_world(&self, local: Vec3) -> Vec3 {
        let r = local.rotated_z(self.yaw);
        Vec3::new(r.x + self.position.x, r.y + self.position.y, r.z)
    }

    pub fn to_local(&self, world: Vec3) -> Vec3 {
        Vec3::new(
            world.x - self.position.x,
            world.y - self.position.y,
            world.z,
        )
        .rotated_z(-self.yaw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SceneShape {
    Cup(ShapeSpec),
    /// Opaque distractor block resting on the desk.
    Block { half_extents: Vec3 },
}

impl SceneShape {
    pub fn footprint_radius(&self) -> f64 {
        match self {
            SceneShape::Cup(spec) => spec.footprint_radius(),
            SceneShape::Block { half_extents } => half_extents.xy().norm(),
        }
    }

    pub fn height(&self) -> f64 {
        match self {
            SceneShape::Cup(spec) => spec.height(),
            SceneShape::Block { half_extents } => 2.0 * half_extents.z,
        }
    }

    /// Local-frame signed distance, base on z = 0.
    pub fn sdf(&self, local: Vec3) -> f64 {
        match self {
            SceneShape::Cup(spec) => sdf_eval(spec, local),
            SceneShape::Block { half_extents } => {
                let c = Vec3::new(0.0, 0.0, half_extents.z);
                sd_box(local - c, *half_extents)
            }
        }
    }
}

fn sd_box(p: Vec3, half: Vec3) -> f64 {
    let q = p.abs() - half;
    let outside = q.max_componentwise(Vec3::ZERO).norm();
    q.max_element().min(0.0) + outside
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    pub shape: SceneShape,
    pub placement: Placement,
    /// Material opacity, 1/m; transparent shells are low, opaque solids high.
    pub opacity: f64,
}

impl SceneObject {
    pub fn is_transparent(&self, threshold: f64) -> bool {
        self.opacity < threshold
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub desk: DeskSpec,
    pub objects: Vec<SceneObject>,
    /// Minimum gap between object footprints, meters.
    pub clearance: f64,
    pub seed: u64,
    #[serde(default = "default_object_samples")]
    pub samples_per_object: usize,
    #[serde(default = "default_desk_samples")]
    pub desk_samples: usize,
}

fn default_object_samples() -> usize {
    2000
}

fn default_desk_samples() -> usize {
    4000
}

impl SceneDescription {
    pub fn validate(&self) -> Result<()> {
        for obj in &self.objects {
            if let SceneShape::Cup(spec) = &obj.shape {
                spec.validate()?;
            }
            let fp = obj.shape.footprint_radius();
            let pos = obj.placement.position;
            if pos.x.abs() + fp > self.desk.half_extent.x
                || pos.y.abs() + fp > self.desk.half_extent.y
            {
                return Err(Error::InvalidScene(format!(
                    "object {:?} footprint leaves the desk",
                    obj.name
                )));
            }
        }
        for i in 0..self.objects.len() {
            for j in i + 1..self.objects.len() {
                let a = &self.objects[i];
                let b = &self.objects[j];
                let gap = a.placement.position.distance(b.placement.position)
                    - a.shape.footprint_radius()
                    - b.shape.footprint_radius();
                if gap < self.clearance {
                    return Err(Error::InvalidScene(format!(
                        "objects {:?} and {:?} are {gap:.3} m apart, need {}",
                        a.name, b.name, self.clearance
                    )));
                }
            }
        }
        Ok(())
    }

    /// Box enclosing desk and objects with margin, for field fitting.
    pub fn scene_box(&self) -> Aabb {
        let top = self
            .objects
            .iter()
            .map(|o| o.shape.height())
            .fold(0.1, f64::max);
        Aabb::new(
            Vec3::new(
                -self.desk.half_extent.x - 0.05,
                -self.desk.half_extent.y - 0.05,
                -self.desk.thickness - 0.04,
            ),
            Vec3::new(
                self.desk.half_extent.x + 0.05,
                self.desk.half_extent.y + 0.05,
                top + 0.1,
            ),
        )
    }
}

/// Analytic scene geometry: SDF and material opacity at any point.
#[derive(Clone, Debug)]
pub struct SceneSdf {
    desk: DeskSpec,
    objects: Vec<(SceneShape, Placement, f64)>,
}

impl SceneSdf {
    pub fn eval(&self, p: Vec3) -> f64 {
        let desk_c = Vec3::new(0.0, 0.0, -self.desk.thickness / 2.0);
        let desk_half = Vec3::new(
            self.desk.half_extent.x,
            self.desk.half_extent.y,
            self.desk.thickness / 2.0,
        );
        let mut d = sd_box(p - desk_c, desk_half);
        for (shape, placement, _) in &self.objects {
            d = d.min(shape.sdf(placement.to_local(p)));
        }
        d
    }

    pub fn material_opacity(&self, p: Vec3) -> f64 {
        let desk_c = Vec3::new(0.0, 0.0, -self.desk.thickness / 2.0);
        let desk_half = Vec3::new(
            self.desk.half_extent.x,
            self.desk.half_extent.y,
            self.desk.thickness / 2.0,
        );
        let mut total = 0.0;
        if sd_box(p - desk_c, desk_half) <= 0.0 {
            total += self.desk.opacity;
        }
        for (shape, placement, opacity) in &self.objects {
            if shape.sdf(placement.to_local(p)) <= 0.0 {
                total += opacity;
            }
        }
        total
    }
}

impl OpacityModel for SceneSdf {
    fn opacity(&self, p: Vec3) -> f64 {
        self.material_opacity(p)
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub description: SceneDescription,
    /// Ground-truth surface clouds per object, world frame, with normals.
    pub object_clouds: Vec<PointCloud>,
    pub desk_cloud: PointCloud,
    pub sdf: SceneSdf,
}

/// Generate ground-truth clouds and the analytic SDF for a scene.
pub fn make_scene(desc: &SceneDescription) -> Result<Scene> {
    desc.validate()?;
    let mut object_clouds = Vec::with_capacity(desc.objects.len());
    for (i, obj) in desc.objects.iter().enumerate() {
        let seed = desc
            .seed
            .wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let local = match &obj.shape {
            SceneShape::Cup(spec) => sample_surface(spec, desc.samples_per_object, seed)?,
            SceneShape::Block { half_extents } => {
                sample_block_surface(*half_extents, desc.samples_per_object, seed)?
            }
        };
        let placement = obj.placement;
        object_clouds.push(local.mapped(
            |p| placement.to_world(p),
            |n| n.rotated_z(placement.yaw),
        ));
    }
    let desk_cloud = sample_desk_top(&desc.desk, desc.desk_samples, desc.seed)?;
    Ok(Scene {
        description: desc.clone(),
        object_clouds,
        desk_cloud,
        sdf: SceneSdf {
            desk: desc.desk,
            objects: desc
                .objects
                .iter()
                .map(|o| (o.shape, o.placement, o.opacity))
                .collect(),
        },
    })
}

fn sample_desk_top(desk: &DeskSpec, n: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDE5C);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push(Vec3::new(
            rng.gen_range(-desk.half_extent.x..desk.half_extent.x),
            rng.gen_range(-desk.half_extent.y..desk.half_extent.y),
            0.0,
        ));
    }
    PointCloud::with_normals(points, vec![Vec3::Z; n])
}

/// Uniform samples over the five visible faces of a resting block.
fn sample_block_surface(half: Vec3, n: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let areas = [
        4.0 * half.x * half.y,             // top
        4.0 * half.y * half.z * 2.0,       // +-x sides
        4.0 * half.x * half.z * 2.0,       // +-y sides
    ];
    let total: f64 = areas.iter().sum();
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = rng.gen_range(0.0..total);
        let (p, nrm) = if pick < areas[0] {
            (
                Vec3::new(
                    rng.gen_range(-half.x..half.x),
                    rng.gen_range(-half.y..half.y),
                    2.0 * half.z,
                ),
                Vec3::Z,
            )
        } else if pick < areas[0] + areas[1] {
            let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            (
                Vec3::new(
                    side * half.x,
                    rng.gen_range(-half.y..half.y),
                    rng.gen_range(0.0..2.0 * half.z),
                ),
                Vec3::X * side,
            )
        } else {
            let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            (
                Vec3::new(
                    rng.gen_range(-half.x..half.x),
                    side * half.y,
                    rng.gen_range(0.0..2.0 * half.z),
                ),
                Vec3::Y * side,
            )
        };
        points.push(p);
        normals.push(nrm);
    }
    PointCloud::with_normals(points, normals)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeConfig {
    /// Fraction of points removed uniformly at random, in [0, 1).
    pub dropout_fraction: f64,
    pub patch_count: usize,
    pub patch_radius: f64,
    /// Isotropic Gaussian jitter; offsets are resampled beyond 6 sigma.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl DegradeConfig {
    pub fn none(seed: u64) -> Self {
        DegradeConfig {
            dropout_fraction: 0.0,
            patch_count: 0,
            patch_radius: 0.0,
            noise_sigma: 0.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_fraction)
            || self.patch_radius < 0.0
            || self.noise_sigma < 0.0
        {
            return Err(Error::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Remove every point within `radius` of `center`.
pub fn remove_sphere(cloud: &PointCloud, center: Vec3, radius: f64) -> Result<PointCloud> {
    let keep: Vec<usize> = cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.distance(center) >= radius)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::DegradedToNothing);
    }
    Ok(cloud.select(&keep))
}

/// Spherical patch removal, then uniform dropout, then truncated Gaussian
/// jitter. Patch centers are seeded random surface points.
pub fn degrade_cloud(cloud: &PointCloud, cfg: &DegradeConfig) -> Result<PointCloud> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = cloud.clone();
    for _ in 0..cfg.patch_count {
        let center = current.points()[rng.gen_range(0..current.len())];
        current = remove_sphere(&current, center, cfg.patch_radius)?;
    }
    if cfg.dropout_fraction > 0.0 {
        let keep: Vec<usize> = (0..current.len())
            .filter(|_| rng.gen::<f64>() >= cfg.dropout_fraction)
            .collect();
        if keep.is_empty() {
            return Err(Error::DegradedToNothing);
        }
        current = current.select(&keep);
    }
    if cfg.noise_sigma > 0.0 {
        let sigma = cfg.noise_sigma;
        let jittered: Vec<Vec3> = current
            .points()
            .iter()
            .map(|&p| {
                loop {
                    let offset = Vec3::new(
                        gaussian(&mut rng) * sigma,
                        gaussian(&mut rng) * sigma,
                        gaussian(&mut rng) * sigma,
                    );
                    if offset.norm() <= 6.0 * sigma {
                        return p + offset;
                    }
                }
            })
            .collect();
        current = match current.normals() {
            Some(ns) => PointCloud::with_normals(jittered, ns.to_vec())?,
            None => PointCloud::from_points(jittered)?,
        };
    }
    Ok(current)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 away from zero for a finite log.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn standard_cylindrical_cup() -> ShapeSpec {
    ShapeSpec::CylindricalCup {
        radius: 0.035,
        height: 0.105,
        wall: Some(0.003),
    }
}

pub fn standard_prismatic_cup() -> ShapeSpec {
    ShapeSpec::PrismaticCup {
        sides: 6,
        apothem: 0.034,
        height: 0.10,
        wall: 0.0035,
    }
}

pub fn standard_mug() -> ShapeSpec {
    ShapeSpec::Mug {
        radius: 0.04,
        height: 0.095,
        wall: 0.0035,
        handle_major: 0.03,
        handle_minor: 0.008,
    }
}

/// Material opacity assigned to transparent shells, 1/m.
pub const TRANSPARENT_OPACITY: f64 = 5.0;
/// Material opacity assigned to opaque solids, 1/m.
pub const OPAQUE_OPACITY: f64 = 200.0;
/// Objects below this opacity are treated as transparent targets.
pub const TRANSPARENCY_THRESHOLD: f64 = 50.0;

/// The standard evaluation scene: cylindrical cup, prismatic cup, mug, and
/// two opaque distractor blocks, placed by seeded rejection sampling.
pub fn standard_scene(seed: u64) -> SceneDescription {
    let shapes: Vec<(String, SceneShape, f64)> = vec![
        (
            "cylindrical_cup".into(),
            SceneShape::Cup(standard_cylindrical_cup()),
            TRANSPARENT_OPACITY,
        ),
        (
            "prismatic_cup".into(),
            SceneShape::Cup(standard_prismatic_cup()),
            TRANSPARENT_OPACITY,
        ),
        ("mug".into(), SceneShape::Cup(standard_mug()), TRANSPARENT_OPACITY),
        (
            "block_a".into(),
            SceneShape::Block {
                half_extents: Vec3::new(0.03, 0.025, 0.035),
            },
            OPAQUE_OPACITY,
        ),
        (
            "block_b".into(),
            SceneShape::Block {
                half_extents: Vec3::new(0.02, 0.04, 0.025),
            },
            OPAQUE_OPACITY,
        ),
    ];
    let desk = DeskSpec::default();
    let clearance = 0.04;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xA24B_AED4_963E_E407).wrapping_add(1));
    let mut placed: Vec<(Vec2, f64)> = Vec::new();
    let mut objects = Vec::new();
    for (name, shape, opacity) in shapes {
        let fp = shape.footprint_radius();
        let lim_x = desk.half_extent.x - fp - 0.01;
        let lim_y = desk.half_extent.y - fp - 0.01;
        let mut attempt = 0;
        let position = loop {
            attempt += 1;
            assert!(attempt < 10_000, "placement rejection sampling stuck");
            let cand = Vec2::new(rng.gen_range(-lim_x..lim_x), rng.gen_range(-lim_y..lim_y));
            if placed
                .iter()
                .all(|(p, r)| cand.distance(*p) >= r + fp + clearance)
            {
                break cand;
            }
        };
        placed.push((position, fp));
        let yaw = crate::math::normalize_angle(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
        objects.push(SceneObject {
            name,
            shape,
            placement: Placement { position, yaw },
            opacity,
        });
    }
    SceneDescription {
        desk,
        objects,
        clearance,
        seed,
        samples_per_object: default_object_samples(),
        desk_samples: default_desk_samples(),
    }
}

/// Degradation of the standard mug benchmark: one large patch on the body
/// opposite the handle, 40% dropout, and 2 mm jitter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MugBenchmarkConfig {
    pub patch_radius: f64,
    pub dropout_fraction: f64,
    pub noise_sigma: f64,
}

impl Default for MugBenchmarkConfig {
    fn default() -> Self {
        MugBenchmarkConfig {
            patch_radius: 0.04,
            dropout_fraction: 0.4,
            noise_sigma: 0.002,
        }
    }
}

/// Produce the degraded partial cloud for a placed mug: the patch is centered
/// on the outer wall opposite the handle at mid-height (away from the rim, so
/// the height cue survives).
pub fn mug_benchmark_partial(
    mug_cloud: &PointCloud,
    spec: &ShapeSpec,
    placement: &Placement,
    cfg: &MugBenchmarkConfig,
    seed: u64,
) -> Result<PointCloud> {
    let ShapeSpec::Mug { radius, height, .. } = spec else {
        return Err(Error::InvalidShape("mug benchmark needs a mug".into()));
    };
    let local_center = Vec3::new(-radius, 0.0, height / 2.0);
    let patched = remove_sphere(mug_cloud, placement.to_world(local_center), cfg.patch_radius)?;
    degrade_cloud(
        &patched,
        &DegradeConfig {
            dropout_fraction: cfg.dropout_fraction,
            patch_count: 0,
            patch_radius: 0.0,
            noise_sigma: cfg.noise_sigma,
            seed,
        },
    )
}
