//! Mask-to-Gaussian association with an adaptive depth tolerance.
//!
//! For every masked pixel the tolerance is the largest depth difference to a
//! masked neighbor in a square window, ignoring differences above the bound
//! `T`. A Gaussian whose center lands on a masked pixel is an inlier when its
//! camera depth lies within that tolerance of the rendered depth.

use crate::config::{NeighborhoodRule, PipelineConfig};
use crate::depth::{mask_mean_depth, project_gaussian, ProjectedGaussian};
use crate::error::Result;
use crate::model::{
    BinaryMask, CameraView, DepthImage, GaussianScene, MaskAssociation, MaskInstance, ToleranceMap,
};

pub fn tolerance_map(
    depth: &DepthImage,
    region: &BinaryMask,
    bound: f64,
    half_width: u32,
    rule: NeighborhoodRule,
) -> ToleranceMap {
    let (w, h) = (depth.width, depth.height);
    let mut values = vec![0.0; w as usize * h as usize];
    let hw = half_width as i64;
    for (x, y) in region.pixels() {
        let center = depth.get(x, y);
        if !center.is_finite() {
            continue;
        }
        let (xi, yi) = (x as i64, y as i64);
        let mut delta: f64 = 0.0;
        for ny in (yi - hw)..=(yi + hw) {
            for nx in (xi - hw)..=(xi + hw) {
                let skip = match rule {
                    NeighborhoodRule::ExcludeRowAndColumn => nx == xi || ny == yi,
                    NeighborhoodRule::ExcludeCenter => nx == xi && ny == yi,
                };
                if skip || !region.get_signed(nx, ny) {
                    continue;
                }
                let d = depth.get(nx as u32, ny as u32);
                if !d.is_finite() {
                    continue;
                }
                let diff = (center - d).abs();
                if diff <= bound && diff > delta {
                    delta = diff;
                }
            }
        }
        values[y as usize * w as usize + x as usize] = delta;
    }
    ToleranceMap {
        width: w,
        height: h,
        values,
    }
}

/// Pixel a projected center lands on: nearest integer coordinate, or `None`
/// when the center falls outside the image extent `[-0.5, size - 0.5]`.
pub fn landing_pixel(p: &ProjectedGaussian, width: u32, height: u32) -> Option<(u32, u32)> {
    let inside = |v: f64, size: u32| v >= -0.5 && v <= size as f64 - 0.5;
    if !inside(p.pixel.x, width) || !inside(p.pixel.y, height) {
        return None;
    }
    let x = (p.pixel.x.round().max(0.0) as u32).min(width - 1);
    let y = (p.pixel.y.round().max(0.0) as u32).min(height - 1);
    Some((x, y))
}

/// Depth test: `D - δ ≤ d ≤ D + δ`, inclusive at both ends.
#[inline]
pub fn depth_inlier(gaussian_depth: f64, pixel_depth: f64, tolerance: f64) -> bool {
    pixel_depth - tolerance <= gaussian_depth && gaussian_depth <= pixel_depth + tolerance
}

/// Why a mask produced no association.
#[derive(Debug, Clone, PartialEq)]
pub enum SkipReason {
    UncoveredMask,
    NoInliers,
}

impl SkipReason {
    pub fn message(&self) -> &'static str {
        match self {
            SkipReason::UncoveredMask => "mask covers only uncovered depth pixels; skipped",
            SkipReason::NoInliers => "no Gaussian passed the association test; skipped",
        }
    }
}

/// Select the Gaussians belonging to `mask` in view `cam`.
pub fn gaussians_for_mask(
    scene: &GaussianScene,
    cam: &CameraView,
    mask: &MaskInstance,
    depth: &DepthImage,
    tol: &ToleranceMap,
    cfg: &PipelineConfig,
) -> std::result::Result<MaskAssociation, SkipReason> {
    let projected: Vec<Option<ProjectedGaussian>> = scene
        .gaussians
        .iter()
        .enumerate()
        .map(|(i, g)| project_gaussian(i as u32, g, cam, cfg.near))
        .collect();
    associate_projected(&projected, cam, mask, depth, tol, cfg)
}

/// Same as [`gaussians_for_mask`] with the scene already projected into `cam`.
pub fn associate_projected(
    projected: &[Option<ProjectedGaussian>],
    cam: &CameraView,
    mask: &MaskInstance,
    depth: &DepthImage,
    tol: &ToleranceMap,
    cfg: &PipelineConfig,
) -> std::result::Result<MaskAssociation, SkipReason> {
    let mean_depth: Result<f64> = mask_mean_depth(depth, &mask.region);
    let Ok(mean_depth) = mean_depth else {
        return Err(SkipReason::UncoveredMask);
    };
    let mut indices = Vec::new();
    for p in projected.iter().flatten() {
        let Some((x, y)) = landing_pixel(p, cam.width, cam.height) else {
            continue;
        };
        if !mask.region.get(x, y) {
            continue;
        }
        if cfg.enable_depth_test {
            let d = depth.get(x, y);
            if !d.is_finite() || !depth_inlier(p.depth, d, tol.get(x, y)) {
                continue;
            }
        }
        indices.push(p.gaussian_index);
    }
    if indices.is_empty() {
        return Err(SkipReason::NoInliers);
    }
    indices.sort_unstable();
    Ok(MaskAssociation {
        view_id: cam.view_id.clone(),
        mask_id: mask.mask_id,
        gaussian_indices: indices,
        weight: mask.confidence / mean_depth,
        label: mask.label.clone(),
        confidence: mask.confidence,
    })
}
