//! Point clouds and the desk plane: the types every stage exchanges.

use crate::error::{Error, Result};
use crate::math::{Aabb, Vec2, Vec3};
use serde::{Deserialize, Serialize};

/// A set of 3D points in meters, optionally with unit outward normals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidCloud("non-finite coordinate".into()));
        }
        Ok(PointCloud { points, normals: None })
    }

    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::InvalidCloud(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) || normals.iter().any(|n| !n.is_finite()) {
            return Err(Error::InvalidCloud("non-finite coordinate".into()));
        }
        if let Some(n) = normals.iter().find(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::InvalidCloud(format!(
                "normal {:?} has length {}",
                n,
                n.norm()
            )));
        }
        Ok(PointCloud {
            points,
            normals: Some(normals),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::ZERO, |acc, &p| acc + p);
        Some(sum / self.points.len() as f64)
    }

    /// Keep the points at the given (sorted or unsorted) indices.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
        }
    }

    /// Apply a point map and a direction map (for normals). The direction map
    /// must preserve unit length.
    pub fn mapped(
        &self,
        mut point_map: impl FnMut(Vec3) -> Vec3,
        mut dir_map: impl FnMut(Vec3) -> Vec3,
    ) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| point_map(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|&n| dir_map(n)).collect()),
        }
    }

    pub fn merged(clouds: &[&PointCloud]) -> PointCloud {
        let all_have_normals = !clouds.is_empty() && clouds.iter().all(|c| c.has_normals());
        let mut points = Vec::new();
        let mut normals = Vec::new();
        for c in clouds {
            points.extend_from_slice(&c.points);
            if all_have_normals {
                normals.extend_from_slice(c.normals.as_ref().unwrap());
            }
        }
        PointCloud {
            points,
            normals: if all_have_normals { Some(normals) } else { None },
        }
    }

    pub fn without_normals(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            normals: None,
        }
    }
}

/// Plane {x : normal . x = offset} with unit normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    normal: Vec3,
    offset: f64,
}

impl Plane {
    pub fn new(normal: Vec3, offset: f64) -> Result<Self> {
        let n = normal
            .try_normalized()
            .ok_or_else(|| Error::Degenerate("zero plane normal".into()))?;
        // Renormalization keeps |normal| = 1 to within f64 rounding (< 1e-9).
        Ok(Plane { normal: n, offset })
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Signed distance of a point to the plane, positive on the normal side.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// Orthogonal projection of `p` onto the plane.
    pub fn project_point(&self, p: Vec3) -> Vec3 {
        p - self.normal * self.signed_distance(p)
    }

    /// Deterministic in-plane orthonormal basis (u, v) with u x v = normal.
    ///
    /// The seed axis is a fixed function of the normal; for a horizontal
    /// plane (normal +z) the basis is the world x/y axes.
    pub fn basis(&self) -> (Vec3, Vec3) {
        let n = self.normal;
        let seed = if n.z.abs() > 0.9 { Vec3::Y } else { Vec3::Z };
        let u = seed.cross(n).normalized();
        let v = n.cross(u);
        (u, v)
    }

    /// In-plane 2D coordinates of `p` (projection expressed in `basis()`),
    /// with the plane point closest to the world origin as 2D origin.
    pub fn to_plane_coords(&self, p: Vec3) -> Vec2 {
        let (u, v) = self.basis();
        let rel = p - self.normal * self.offset;
        Vec2::new(rel.dot(u), rel.dot(v))
    }

    /// Inverse of `to_plane_coords` at the given height above the plane.
    pub fn from_plane_coords(&self, q: Vec2, height: f64) -> Vec3 {
        let (u, v) = self.basis();
        self.normal * (self.offset + height) + u * q.x + v * q.y
    }
}

/// Estimate outward normals for a cloud that has none.
///
/// Local normals come from the smallest covariance direction over the `k`
/// nearest neighbors; orientation points away from the vertical axis through
/// `axis_point` (radially outward), falling back to "away from the centroid"
/// where the radial component vanishes.
pub fn estimate_normals(cloud: &PointCloud, k: usize, axis_point: Vec3) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let pts = cloud.points();
    let nn = crate::metrics::GridIndex::build(pts);
    let centroid = cloud.centroid().unwrap();
    let mut normals = Vec::with_capacity(pts.len());
    for &p in pts {
        let neigh = nn.k_nearest(p, k.max(4));
        let mut mean = Vec3::ZERO;
        for &i in &neigh {
            mean += pts[i];
        }
        mean = mean / neigh.len() as f64;
        let mut cov = [[0.0f64; 3]; 3];
        for &i in &neigh {
            let d = pts[i] - mean;
            let v = [d.x, d.y, d.z];
            for r in 0..3 {
                for c in 0..3 {
                    cov[r][c] += v[r] * v[c];
                }
            }
        }
        let n = smallest_eigenvector_3x3(&cov);
        let radial = Vec3::new(p.x - axis_point.x, p.y - axis_point.y, 0.0);
        let orient = if radial.norm() > 1e-9 && n.dot(radial).abs() > 0.2 * n.norm() * radial.norm()
        {
            radial
        } else {
            p - centroid
        };
        let n = if n.dot(orient) < 0.0 { -n } else { n };
        normals.push(n.normalized());
    }
    PointCloud::with_normals(pts.to_vec(), normals)
}

/// Smallest-eigenvalue eigenvector of a symmetric 3x3 matrix by Jacobi sweeps.
pub(crate) fn smallest_eigenvector_3x3(m: &[[f64; 3]; 3]) -> Vec3 {
    let mut a = *m;
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..32 {
        // largest off-diagonal element
        let mut p = 0;
        let mut q = 1;
        let mut best = a[0][1].abs();
        for (r, c) in [(0usize, 2usize), (1, 2)] {
            if a[r][c].abs() > best {
                best = a[r][c].abs();
                p = r;
                q = c;
            }
        }
        if best < 1e-18 {
            break;
        }
        let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        for k in 0..3 {
            let akp = a[k][p];
            let akq = a[k][q];
            a[k][p] = c * akp - s * akq;
            a[k][q] = s * akp + c * akq;
        }
        for k in 0..3 {
            let apk = a[p][k];
            let aqk = a[q][k];
            a[p][k] = c * apk - s * aqk;
            a[q][k] = s * apk + c * aqk;
        }
        for row in v.iter_mut() {
            let vp = row[p];
            let vq = row[q];
            row[p] = c * vp - s * vq;
            row[q] = s * vp + c * vq;
        }
    }
    let mut idx = 0;
    for i in 1..3 {
        if a[i][i] < a[idx][idx] {
            idx = i;
        }
    }
    Vec3::new(v[0][idx], v[1][idx], v[2][idx]).normalized()
}
