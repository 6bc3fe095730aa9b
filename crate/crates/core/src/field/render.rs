//! Ray quadrature: transmittance, opacity, and expected depth along a ray.

use super::DensityField;
use crate::error::Result;
use crate::math::Vec3;
use serde::{Deserialize, Serialize};

/// Floor for the opacity used to normalize expected depth.
pub(crate) const DEPTH_ALPHA_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, t_near: f64, t_far: f64) -> Result<Ray> {
        let direction = direction
            .try_normalized()
            .ok_or_else(|| crate::error::Error::Degenerate("zero ray direction".into()))?;
        if !(t_near < t_far) {
            return Err(crate::error::Error::InvalidConfig(format!(
                "ray needs t_near < t_far, got {t_near} >= {t_far}"
            )));
        }
        Ok(Ray {
            origin,
            direction,
            t_near,
            t_far,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderResult {
    /// Total opacity 1 - T(t_far), in [0, 1].
    pub alpha: f64,
    /// Transmittance at the n+1 segment boundaries from t_near to t_far;
    /// starts at 1 and is monotone non-increasing.
    pub transmittance_profile: Vec<f64>,
    /// Opacity-weighted mean depth, normalized by max(alpha, floor).
    pub expected_depth: f64,
}

/// Midpoint-rule quadrature of an arbitrary density function along a ray.
///
/// Transmittance updates multiplicatively per segment, which is exact for a
/// density that is constant within each segment.
pub fn render_sigma(sigma: impl Fn(Vec3) -> f64, ray: &Ray, n_samples: usize) -> RenderResult {
    assert!(n_samples >= 2, "render needs at least 2 samples");
    let dt = (ray.t_far - ray.t_near) / n_samples as f64;
    let mut profile = Vec::with_capacity(n_samples + 1);
    let mut transmittance = 1.0f64;
    profile.push(transmittance);
    let mut weighted_depth = 0.0;
    for i in 0..n_samples {
        let t_mid = ray.t_near + (i as f64 + 0.5) * dt;
        let s = sigma(ray.at(t_mid)).max(0.0);
        let seg_alpha = 1.0 - (-s * dt).exp();
        weighted_depth += transmittance * seg_alpha * t_mid;
        transmittance *= 1.0 - seg_alpha;
        profile.push(transmittance);
    }
    let alpha = 1.0 - transmittance;
    RenderResult {
        alpha,
        transmittance_profile: profile,
        expected_depth: weighted_depth / alpha.max(DEPTH_ALPHA_FLOOR),
    }
}

/// Render a fitted density field along a ray, clipping it to the field's
/// bounding box. A ray that misses the box renders empty.
pub fn render_ray(field: &DensityField, ray: &Ray, n_samples: usize) -> Result<RenderResult> {
    match field
        .bounds()
        .clip_ray(ray.origin, ray.direction, ray.t_near, ray.t_far)
    {
        Some((lo, hi)) => {
            let clipped = Ray {
                origin: ray.origin,
                direction: ray.direction,
                t_near: lo,
                t_far: hi,
            };
            Ok(render_sigma(
                |p| field.sigma(p).unwrap_or(0.0),
                &clipped,
                n_samples,
            ))
        }
        None => Ok(RenderResult {
            alpha: 0.0,
            transmittance_profile: vec![1.0; n_samples + 1],
            expected_depth: 0.0,
        }),
    }
}
