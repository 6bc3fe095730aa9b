//! Density-band point extraction from a fitted field.
//!
//! Transparent material reads back as low-but-nonzero density, opaque
//! surfaces as high density; air stays near zero. Band thresholds are
//! fractions of a reference density that is opaque at desk-scale path
//! lengths.

use super::DensityField;
use crate::error::{Error, Result};
use crate::cloud::PointCloud;
use crate::math::Vec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    /// Density (1/m) treated as fully opaque at desk scale.
    pub sigma_scale: f64,
    /// Transparent band lower edge, as a fraction of `sigma_scale`.
    pub lo_fraction: f64,
    /// Transparent band upper edge / opaque threshold, same units.
    pub hi_fraction: f64,
    /// Cells per axis of the sampling grid.
    pub grid_res: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            sigma_scale: 10.0,
            lo_fraction: 0.2,
            hi_fraction: 0.8,
            grid_res: 64,
        }
    }
}

impl ExtractConfig {
    pub fn band(&self) -> (f64, f64) {
        (
            self.lo_fraction * self.sigma_scale,
            self.hi_fraction * self.sigma_scale,
        )
    }
}

#[derive(Clone, Debug)]
pub struct ExtractedPoints {
    /// Cell centers with density inside the transparent band.
    pub transparent: PointCloud,
    /// Cell centers at or above the opaque threshold.
    pub opaque: PointCloud,
    /// Edge lengths of one grid cell.
    pub cell: Vec3,
}

impl ExtractedPoints {
    pub fn cell_diagonal(&self) -> f64 {
        self.cell.norm()
    }

    /// Transparent and opaque points merged, transparent first.
    pub fn merged(&self) -> PointCloud {
        PointCloud::merged(&[&self.transparent, &self.opaque])
    }
}

/// Evaluate the field on a regular grid and split cell centers into the
/// transparent band and the opaque set.
pub fn extract_points(
    field: &DensityField,
    band: (f64, f64),
    grid_res: usize,
) -> Result<ExtractedPoints> {
    let (lo, hi) = band;
    if !(0.0 <= lo && lo < hi) {
        return Err(Error::InvalidConfig(format!(
            "extraction band needs 0 <= lo < hi, got ({lo}, {hi})"
        )));
    }
    if grid_res < 2 {
        return Err(Error::InvalidConfig("grid_res must be >= 2".into()));
    }
    let bbox = field.bounds();
    let ext = bbox.extent();
    let n = grid_res;
    let cell = ext / n as f64;
    // Parallel over z-slabs; slab order is fixed, so output order is too.
    let slabs: Vec<(Vec<Vec3>, Vec<Vec3>)> = (0..n)
        .into_par_iter()
        .map(|iz| {
            let mut transparent = Vec::new();
            let mut opaque = Vec::new();
            let z = bbox.min.z + (iz as f64 + 0.5) * cell.z;
            for iy in 0..n {
                let y = bbox.min.y + (iy as f64 + 0.5) * cell.y;
                for ix in 0..n {
                    let x = bbox.min.x + (ix as f64 + 0.5) * cell.x;
                    let p = Vec3::new(x, y, z);
                    let sigma = field.sigma(p).expect("cell centers are inside the box");
                    if sigma >= hi {
                        opaque.push(p);
                    } else if sigma > lo {
                        transparent.push(p);
                    }
                }
            }
            (transparent, opaque)
        })
        .collect();
    let mut transparent = Vec::new();
    let mut opaque = Vec::new();
    for (t, o) in slabs {
        transparent.extend(t);
        opaque.extend(o);
    }
    Ok(ExtractedPoints {
        transparent: PointCloud::from_points(transparent)?,
        opaque: PointCloud::from_points(opaque)?,
        cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{fit_field, hemisphere_rays, FieldConfig, FitConfig};
    use crate::math::Aabb;

    #[test]
    fn empty_scene_extracts_nothing() {
        let bbox = Aabb::new(Vec3::ZERO, Vec3::splat(1.0));
        let field_cfg = FieldConfig {
            levels: 4,
            features: 2,
            table_size_log2: 10,
            coarse_resolution: 4,
            fine_resolution: 16,
            hidden: 8,
            sigma_bias: -2.0,
            init_seed: 2,
        };
        let fit_cfg = FitConfig {
            iterations: 300,
            batch_rays: 32,
            n_samples: 32,
            gt_samples: 256,
            learning_rate: 0.05,
            ..FitConfig::default()
        };
        let rays = hemisphere_rays(bbox, 512, 21);
        let (field, _) = fit_field(&|_p: Vec3| 0.0, bbox, &rays, field_cfg, &fit_cfg).unwrap();
        let out = extract_points(&field, ExtractConfig::default().band(), 32).unwrap();
        assert!(out.transparent.is_empty(), "{} stray band points", out.transparent.len());
        assert!(out.opaque.is_empty());
    }

    #[test]
    fn widening_band_never_removes_points() {
        let bbox = Aabb::new(Vec3::ZERO, Vec3::splat(1.0));
        let field_cfg = FieldConfig {
            levels: 4,
            features: 2,
            table_size_log2: 10,
            coarse_resolution: 4,
            fine_resolution: 16,
            hidden: 8,
            sigma_bias: 0.5,
            init_seed: 3,
        };
        let field = crate::field::DensityField::new(field_cfg, bbox).unwrap();
        let narrow = extract_points(&field, (0.9, 1.1), 16).unwrap();
        let wide = extract_points(&field, (0.5, 1.5), 16).unwrap();
        let wide_set: std::collections::HashSet<_> = wide
            .transparent
            .points()
            .iter()
            .map(|p| format!("{:?}", p))
            .collect();
        for p in narrow.transparent.points() {
            assert!(wide_set.contains(&format!("{:?}", p)));
        }
    }

    #[test]
    fn invalid_band_rejected() {
        let bbox = Aabb::new(Vec3::ZERO, Vec3::splat(1.0));
        let field = crate::field::DensityField::new(FieldConfig::default(), bbox).unwrap();
        assert!(extract_points(&field, (0.8, 0.2), 16).is_err());
    }
}
