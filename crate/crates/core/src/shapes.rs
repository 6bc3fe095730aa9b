//! Analytic signed distance functions for the procedural cup/mug family.
//!
//! These shapes serve double duty: ground truth for synthetic scenes and the
//! training family for the shape prior. Local frame convention: the shape
//! rests on z = 0, its symmetry axis is +z, and the mug handle points along
//! +x. Negative SDF means inside the material.

use crate::error::{Error, Result};
use crate::math::{Aabb, Vec2, Vec3};
use crate::cloud::PointCloud;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeKind {
    Cylindrical,
    Prismatic,
    Mug,
}

impl ShapeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShapeKind::Cylindrical => "cylindrical",
            ShapeKind::Prismatic => "prismatic",
            ShapeKind::Mug => "mug",
        }
    }
}

/// Parameters of one procedural shape. All lengths in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ShapeSpec {
    /// Cup of revolution. `wall: None` is the solid (filled) variant.
    CylindricalCup {
        radius: f64,
        height: f64,
        wall: Option<f64>,
    },
    /// Regular-polygon cup; `apothem` is the center-to-flat distance and the
    /// first flat faces +x.
    PrismaticCup {
        sides: u32,
        apothem: f64,
        height: f64,
        wall: f64,
    },
    /// Cylindrical cup body plus a torus handle in the xz-plane, clipped at
    /// the wall so the tube does not cross the cavity.
    Mug {
        radius: f64,
        height: f64,
        wall: f64,
        handle_major: f64,
        handle_minor: f64,
    },
}

impl ShapeSpec {
    pub fn kind(&self) -> ShapeKind {
        match self {
            ShapeSpec::CylindricalCup { .. } => ShapeKind::Cylindrical,
            ShapeSpec::PrismaticCup { .. } => ShapeKind::Prismatic,
            ShapeSpec::Mug { .. } => ShapeKind::Mug,
        }
    }

    pub fn height(&self) -> f64 {
        match *self {
            ShapeSpec::CylindricalCup { height, .. }
            | ShapeSpec::PrismaticCup { height, .. }
            | ShapeSpec::Mug { height, .. } => height,
        }
    }

    /// Largest distance from the axis to any surface point.
    pub fn footprint_radius(&self) -> f64 {
        match *self {
            ShapeSpec::CylindricalCup { radius, .. } => radius,
            ShapeSpec::PrismaticCup { sides, apothem, .. } => {
                apothem / (std::f64::consts::PI / sides as f64).cos()
            }
            ShapeSpec::Mug {
                radius,
                handle_major,
                handle_minor,
                ..
            } => radius + handle_major + handle_minor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidShape(msg));
        match *self {
            ShapeSpec::CylindricalCup { radius, height, wall } => {
                if radius <= 0.0 || height <= 0.0 {
                    return bad(format!("cylindrical cup: r={radius}, h={height}"));
                }
                if let Some(w) = wall {
                    if w <= 0.0 || w >= radius || w >= height {
                        return bad(format!("cylindrical cup wall {w} vs r={radius}, h={height}"));
                    }
                }
            }
            ShapeSpec::PrismaticCup {
                sides,
                apothem,
                height,
                wall,
            } => {
                if sides < 3 {
                    return bad(format!("prismatic cup needs >= 3 sides, got {sides}"));
                }
                if apothem <= 0.0 || height <= 0.0 || wall <= 0.0 || wall >= apothem || wall >= height {
                    return bad(format!(
                        "prismatic cup: a={apothem}, h={height}, wall={wall}"
                    ));
                }
            }
            ShapeSpec::Mug {
                radius,
                height,
                wall,
                handle_major,
                handle_minor,
            } => {
                if radius <= 0.0 || height <= 0.0 {
                    return bad(format!("mug: r={radius}, h={height}"));
                }
                if wall <= 0.0 || wall >= radius || wall >= height {
                    return bad(format!("mug wall {wall} vs r={radius}, h={height}"));
                }
                if handle_minor <= 0.0 || handle_major <= handle_minor {
                    return bad(format!(
                        "mug handle: major={handle_major}, minor={handle_minor}"
                    ));
                }
                if height / 2.0 - handle_major - handle_minor <= 0.0 {
                    return bad("mug handle extends below the base".into());
                }
            }
        }
        Ok(())
    }

    /// Tight local-frame bounding box of the surface.
    pub fn local_bounds(&self) -> Aabb {
        let h = self.height();
        match *self {
            ShapeSpec::CylindricalCup { radius, .. } => Aabb::new(
                Vec3::new(-radius, -radius, 0.0),
                Vec3::new(radius, radius, h),
            ),
            ShapeSpec::PrismaticCup { .. } => {
                let r = self.footprint_radius();
                Aabb::new(Vec3::new(-r, -r, 0.0), Vec3::new(r, r, h))
            }
            ShapeSpec::Mug {
                radius,
                handle_major,
                handle_minor,
                ..
            } => Aabb::new(
                Vec3::new(-radius, -radius, 0.0),
                Vec3::new(radius + handle_major + handle_minor, radius, h),
            ),
        }
    }
}

/// One labeled SDF sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdfSample {
    pub position: Vec3,
    pub sdf: f64,
}

/// Exact signed distance to the shape surface (negative inside).
///
/// The mug is the min-union of body and clipped handle torus, which is exact
/// on the surface and a lower bound on the magnitude near the body-handle
/// junction; same for the prism cup's cavity edges.
pub fn sdf_eval(spec: &ShapeSpec, p: Vec3) -> f64 {
    match *spec {
        ShapeSpec::CylindricalCup { radius, height, wall } => match wall {
            None => sd_solid_cylinder(p, radius, height),
            Some(w) => sd_revolved_cup(p, radius, height, w),
        },
        ShapeSpec::PrismaticCup {
            sides,
            apothem,
            height,
            wall,
        } => sd_prism_cup(p, sides, apothem, height, wall),
        ShapeSpec::Mug {
            radius,
            height,
            wall,
            handle_major,
            handle_minor,
        } => {
            let body = sd_revolved_cup(p, radius, height, wall);
            let handle = sd_mug_handle(p, radius, height, wall, handle_major, handle_minor);
            body.min(handle)
        }
    }
}

fn sd_solid_cylinder(p: Vec3, radius: f64, height: f64) -> f64 {
    let rho = p.xy().norm();
    let dx = rho - radius;
    let dy = (p.z - height / 2.0).abs() - height / 2.0;
    let outside = Vec2::new(dx.max(0.0), dy.max(0.0)).norm();
    dx.max(dy).min(0.0) + outside
}

/// Exact distance to the surface of revolution of an L-shaped cup profile.
///
/// Profile polyline in the (rho, z) half-plane: base disc, outer wall, rim,
/// inner wall, inner bottom. Distance to any revolved segment equals the 2D
/// segment distance because every query has rho >= 0.
fn sd_revolved_cup(p: Vec3, radius: f64, height: f64, wall: f64) -> f64 {
    let rho = p.xy().norm();
    let q = Vec2::new(rho, p.z);
    let ri = radius - wall;
    let profile = [
        (Vec2::new(0.0, 0.0), Vec2::new(radius, 0.0)),
        (Vec2::new(radius, 0.0), Vec2::new(radius, height)),
        (Vec2::new(radius, height), Vec2::new(ri, height)),
        (Vec2::new(ri, height), Vec2::new(ri, wall)),
        (Vec2::new(ri, wall), Vec2::new(0.0, wall)),
    ];
    let mut d = f64::INFINITY;
    for (a, b) in profile {
        d = d.min(dist_segment_2d(q, a, b));
    }
    let inside =
        rho <= radius && p.z >= 0.0 && p.z <= height && !(rho < ri && p.z > wall);
    if inside {
        -d
    } else {
        d
    }
}

fn dist_segment_2d(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Exact 2D signed distance to a regular polygon with the given apothem
/// (center-to-edge distance); first edge normal along +x.
fn sd_regular_polygon_2d(p: Vec2, apothem: f64, sides: u32) -> f64 {
    let an = std::f64::consts::PI / sides as f64;
    let rho = p.norm();
    if rho == 0.0 {
        return -apothem;
    }
    // Fold the bearing into [0, an] around the nearest edge normal.
    let theta = p.y.atan2(p.x);
    let folded = ((theta + an).rem_euclid(2.0 * an) - an).abs();
    let q = Vec2::new(rho * folded.cos(), rho * folded.sin());
    let dx = q.x - apothem;
    let dy = q.y - apothem * an.tan();
    if dx <= 0.0 {
        dx
    } else {
        Vec2::new(dx, dy.max(0.0)).norm()
    }
}

/// Exact extrusion of a 2D SDF over z in [z0, z1].
fn sd_extruded(d2: f64, z: f64, z0: f64, z1: f64) -> f64 {
    let half = (z1 - z0) / 2.0;
    let dz = (z - (z0 + z1) / 2.0).abs() - half;
    let outside = Vec2::new(d2.max(0.0), dz.max(0.0)).norm();
    d2.max(dz).min(0.0) + outside
}

fn sd_prism_cup(p: Vec3, sides: u32, apothem: f64, height: f64, wall: f64) -> f64 {
    let outer2 = sd_regular_polygon_2d(p.xy(), apothem, sides);
    let outer = sd_extruded(outer2, p.z, 0.0, height);
    let inner2 = sd_regular_polygon_2d(p.xy(), apothem - wall, sides);
    // Inner cavity extends past the top so the subtraction opens the cup.
    let inner = sd_extruded(inner2, p.z, wall, height + apothem);
    outer.max(-inner)
}

fn handle_center(radius: f64, height: f64) -> Vec3 {
    Vec3::new(radius, 0.0, height / 2.0)
}

/// Torus in the xz-plane centered on the outer wall, clipped at x = r - w/2 so
/// the tube merges into the wall instead of crossing the cavity.
fn sd_mug_handle(
    p: Vec3,
    radius: f64,
    height: f64,
    wall: f64,
    handle_major: f64,
    handle_minor: f64,
) -> f64 {
    let c = handle_center(radius, height);
    let rel = p - c;
    let ring = Vec2::new(rel.x, rel.z).norm() - handle_major;
    let torus = Vec2::new(ring, rel.y).norm() - handle_minor;
    let cut = (radius - wall / 2.0) - p.x;
    torus.max(cut)
}

/// Deterministic uniform surface samples with outward analytic normals.
pub fn sample_surface(spec: &ShapeSpec, n: usize, seed: u64) -> Result<PointCloud> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("sample_surface needs n > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let faces = surface_faces(spec);
    let total_area: f64 = faces.iter().map(|f| f.area).sum();
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut guard = 0usize;
    while points.len() < n {
        guard += 1;
        if guard > 1000 * n {
            return Err(Error::Degenerate("surface sampling not converging".into()));
        }
        let mut pick = rng.gen_range(0.0..total_area);
        let mut face = &faces[faces.len() - 1];
        for f in &faces {
            if pick < f.area {
                face = f;
                break;
            }
            pick -= f.area;
        }
        if let Some((p, nrm)) = sample_face(spec, face, &mut rng) {
            points.push(p);
            normals.push(nrm);
        }
    }
    PointCloud::with_normals(points, normals)
}

#[derive(Clone, Copy, Debug)]
enum Face {
    Disc { z: f64, r_in: f64, r_out: f64, up: bool },
    CylWall { r: f64, z0: f64, z1: f64, outward: bool },
    PolygonCap { z: f64, apothem_in: f64, apothem_out: f64, up: bool },
    PrismWall { apothem: f64, z0: f64, z1: f64, outward: bool },
    HandleTube,
}

#[derive(Clone, Copy, Debug)]
struct WeightedFace {
    face: Face,
    area: f64,
}

fn polygon_area(apothem: f64, sides: u32) -> f64 {
    let an = std::f64::consts::PI / sides as f64;
    sides as f64 * apothem * apothem * an.tan()
}

fn surface_faces(spec: &ShapeSpec) -> Vec<WeightedFace> {
    use std::f64::consts::PI;
    let mut faces = Vec::new();
    let mut push = |face: Face, area: f64| faces.push(WeightedFace { face, area });
    match *spec {
        ShapeSpec::CylindricalCup { radius, height, wall } => match wall {
            None => {
                push(Face::Disc { z: 0.0, r_in: 0.0, r_out: radius, up: false }, PI * radius * radius);
                push(Face::Disc { z: height, r_in: 0.0, r_out: radius, up: true }, PI * radius * radius);
                push(Face::CylWall { r: radius, z0: 0.0, z1: height, outward: true }, 2.0 * PI * radius * height);
            }
            Some(w) => {
                let ri = radius - w;
                push(Face::Disc { z: 0.0, r_in: 0.0, r_out: radius, up: false }, PI * radius * radius);
                push(Face::CylWall { r: radius, z0: 0.0, z1: height, outward: true }, 2.0 * PI * radius * height);
                push(Face::Disc { z: height, r_in: ri, r_out: radius, up: true }, PI * (radius * radius - ri * ri));
                push(Face::CylWall { r: ri, z0: w, z1: height, outward: false }, 2.0 * PI * ri * (height - w));
                push(Face::Disc { z: w, r_in: 0.0, r_out: ri, up: true }, PI * ri * ri);
            }
        },
        ShapeSpec::PrismaticCup { sides, apothem, height, wall } => {
            let an = PI / sides as f64;
            let ai = apothem - wall;
            let outer_w = 2.0 * apothem * an.tan();
            let inner_w = 2.0 * ai * an.tan();
            push(Face::PolygonCap { z: 0.0, apothem_in: 0.0, apothem_out: apothem, up: false }, polygon_area(apothem, sides));
            push(Face::PrismWall { apothem, z0: 0.0, z1: height, outward: true }, sides as f64 * outer_w * height);
            push(
                Face::PolygonCap { z: height, apothem_in: ai, apothem_out: apothem, up: true },
                polygon_area(apothem, sides) - polygon_area(ai, sides),
            );
            push(Face::PrismWall { apothem: ai, z0: wall, z1: height, outward: false }, sides as f64 * inner_w * (height - wall));
            push(Face::PolygonCap { z: wall, apothem_in: 0.0, apothem_out: ai, up: true }, polygon_area(ai, sides));
        }
        ShapeSpec::Mug { radius, height, wall, handle_major, handle_minor } => {
            let body = ShapeSpec::CylindricalCup { radius, height, wall: Some(wall) };
            faces.extend(surface_faces(&body));
            faces.push(WeightedFace {
                face: Face::HandleTube,
                area: 4.0 * PI * PI * handle_major * handle_minor,
            });
            return faces;
        }
    }
    faces
}

/// Sample a point on the face; `None` means the point was rejected (interior
/// to the union, clipped off, or outside the annular cap).
fn sample_face(spec: &ShapeSpec, wf: &WeightedFace, rng: &mut ChaCha8Rng) -> Option<(Vec3, Vec3)> {
    use std::f64::consts::{PI, TAU};
    let (p, nrm) = match wf.face {
        Face::Disc { z, r_in, r_out, up } => {
            let u: f64 = rng.gen();
            let rho = (r_in * r_in + u * (r_out * r_out - r_in * r_in)).sqrt();
            let theta = rng.gen_range(0.0..TAU);
            (
                Vec3::new(rho * theta.cos(), rho * theta.sin(), z),
                if up { Vec3::Z } else { -Vec3::Z },
            )
        }
        Face::CylWall { r, z0, z1, outward } => {
            let theta = rng.gen_range(0.0..TAU);
            let z = rng.gen_range(z0..z1);
            let radial = Vec3::new(theta.cos(), theta.sin(), 0.0);
            (radial * r + Vec3::new(0.0, 0.0, z), if outward { radial } else { -radial })
        }
        Face::PolygonCap { z, apothem_in, apothem_out, up } => {
            let (sides, _) = prism_params(spec)?;
            let q = sample_polygon_2d(apothem_out, sides, rng);
            if apothem_in > 0.0 && sd_regular_polygon_2d(q, apothem_in, sides) < 0.0 {
                return None;
            }
            (Vec3::new(q.x, q.y, z), if up { Vec3::Z } else { -Vec3::Z })
        }
        Face::PrismWall { apothem, z0, z1, outward } => {
            let (sides, _) = prism_params(spec)?;
            let an = PI / sides as f64;
            let edge = rng.gen_range(0..sides);
            let t = rng.gen_range(-1.0..1.0) * apothem * an.tan();
            let z = rng.gen_range(z0..z1);
            let bearing = edge as f64 * 2.0 * an;
            let local = Vec2::new(apothem, t).rotated(bearing);
            let n2 = Vec2::new(1.0, 0.0).rotated(bearing);
            let n = Vec3::new(n2.x, n2.y, 0.0);
            (Vec3::new(local.x, local.y, z), if outward { n } else { -n })
        }
        Face::HandleTube => {
            let ShapeSpec::Mug { radius, height, wall, handle_major, handle_minor } = *spec else {
                return None;
            };
            let u = rng.gen_range(0.0..TAU);
            let v = rng.gen_range(0.0..TAU);
            // Area element scales with major + minor cos(v); rejection keeps
            // the sampling uniform.
            let accept: f64 = rng.gen();
            if accept > (handle_major + handle_minor * v.cos()) / (handle_major + handle_minor) {
                return None;
            }
            let c = handle_center(radius, height);
            let ring_dir = Vec3::new(u.cos(), 0.0, u.sin());
            let n = ring_dir * v.cos() + Vec3::Y * v.sin();
            let p = c + ring_dir * handle_major + n * handle_minor;
            if p.x < radius - wall / 2.0 {
                return None;
            }
            (p, n)
        }
    };
    // Mug parts can bury each other's surface; drop interior points.
    if let ShapeSpec::Mug { radius, height, wall, handle_major, handle_minor } = *spec {
        let other = match wf.face {
            Face::HandleTube => sd_revolved_cup(p, radius, height, wall),
            _ => sd_mug_handle(p, radius, height, wall, handle_major, handle_minor),
        };
        if other < -1e-12 {
            return None;
        }
    }
    Some((p, nrm))
}

fn prism_params(spec: &ShapeSpec) -> Option<(u32, f64)> {
    match *spec {
        ShapeSpec::PrismaticCup { sides, apothem, .. } => Some((sides, apothem)),
        _ => None,
    }
}

fn sample_polygon_2d(apothem: f64, sides: u32, rng: &mut ChaCha8Rng) -> Vec2 {
    let an = std::f64::consts::PI / sides as f64;
    let circum = apothem / an.cos();
    let tri = rng.gen_range(0..sides);
    let a0 = tri as f64 * 2.0 * an - an;
    let v0 = Vec2::new(circum * a0.cos(), circum * a0.sin());
    let v1 = Vec2::new(circum * (a0 + 2.0 * an).cos(), circum * (a0 + 2.0 * an).sin());
    let (mut r1, r2): (f64, f64) = (rng.gen(), rng.gen());
    r1 = r1.sqrt();
    // Uniform in the triangle (origin, v0, v1).
    v0 * (r1 * (1.0 - r2)) + v1 * (r1 * r2)
}

/// Central-difference SDF gradient, normalized.
pub fn sdf_gradient(spec: &ShapeSpec, p: Vec3, h: f64) -> Vec3 {
    let g = Vec3::new(
        sdf_eval(spec, p + Vec3::X * h) - sdf_eval(spec, p - Vec3::X * h),
        sdf_eval(spec, p + Vec3::Y * h) - sdf_eval(spec, p - Vec3::Y * h),
        sdf_eval(spec, p + Vec3::Z * h) - sdf_eval(spec, p - Vec3::Z * h),
    );
    g.try_normalized().unwrap_or(Vec3::Z)
}
