use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::landing_pixel;
use crate::codebook::RelabeledMaskSet;
use crate::config::PipelineConfig;
use crate::depth::{project_gaussian, render_depth};
use crate::model::{BinaryMask, CameraView, CodebookObject, DepthImage, GaussianScene, Label, ObjectCodebook};

/// Half-extent of a splat's footprint, in standard deviations.
pub const FOOTPRINT_SIGMAS: f64 = 2.0;

/// Axis-aligned box in pixel coordinates (pixel centers at integers), inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub view_id: String,
    #[serde(default)]
    pub object_id: Option<u32>,
    pub label: Label,
    pub confidence: f64,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    /// Area counting whole pixels covered, so a single-pixel box has area 1.
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min + 1.0).max(0.0) * (self.y_max - self.y_min + 1.0).max(0.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min) + 1.0).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min) + 1.0).max(0.0);
        let inter = w * h;
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewBoxes {
    pub view_id: String,
    pub width: u32,
    pub height: u32,
    pub boxes: Vec<BBox>,
}

/// Box around the visible splats of an object; `None` with fewer than
/// `cfg.min_visible` of them. A splat is visible when its center lands in the
/// image at depth no farther than the rendered depth plus `cfg.depth_bound`.
pub fn bbox_from_object(
    object: &CodebookObject,
    scene: &GaussianScene,
    cam: &CameraView,
    depth: &DepthImage,
    cfg: &PipelineConfig,
) -> Option<BBox> {
    let mut visible = 0usize;
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in object.gaussian_indices() {
        let Some(p) = project_gaussian(i, &scene.gaussians[i as usize], cam, cfg.near) else {
            continue;
        };
        let Some((px, py)) = landing_pixel(&p, cam.width, cam.height) else {
            continue;
        };
        if !(p.depth <= depth.get(px, py) + cfg.depth_bound) {
            continue;
        }
        visible += 1;
        let (sx, sy) = p.sigma_xy();
        x0 = x0.min(p.pixel.x - FOOTPRINT_SIGMAS * sx);
        x1 = x1.max(p.pixel.x + FOOTPRINT_SIGMAS * sx);
        y0 = y0.min(p.pixel.y - FOOTPRINT_SIGMAS * sy);
        y1 = y1.max(p.pixel.y + FOOTPRINT_SIGMAS * sy);
    }
    if visible < cfg.min_visible.max(1) {
        return None;
    }
    let (wmax, hmax) = ((cam.width - 1) as f64, (cam.height - 1) as f64);
    Some(BBox {
        view_id: cam.view_id.clone(),
        object_id: Some(object.object_id),
        label: object.label().cloned().unwrap_or_else(|| Label::new("unknown")),
        confidence: object.object_confidence.unwrap_or(1.0),
        x_min: x0.clamp(0.0, wmax),
        y_min: y0.clamp(0.0, hmax),
        x_max: x1.clamp(0.0, wmax),
        y_max: y1.clamp(0.0, hmax),
    })
}

/// Boxes for every object in every view, sorted by view id then object id.
pub fn detect_boxes(
    codebook: &ObjectCodebook,
    scene: &GaussianScene,
    cameras: &[CameraView],
    cfg: &PipelineConfig,
) -> Vec<ViewBoxes> {
    let mut out: Vec<ViewBoxes> = cameras
        .par_iter()
        .map(|cam| {
            let depth = render_depth(scene, cam, cfg.near);
            let boxes = codebook
                .objects
                .iter()
                .filter_map(|o| bbox_from_object(o, scene, cam, &depth, cfg))
                .collect();
            ViewBoxes {
                view_id: cam.view_id.clone(),
                width: cam.width,
                height: cam.height,
                boxes,
            }
        })
        .collect();
    out.sort_by(|a, b| a.view_id.cmp(&b.view_id));
    out
}

/// Tight boxes around each ground-truth instance (union of its masks).
pub fn gt_boxes_from_masks(gt: &[RelabeledMaskSet]) -> Vec<ViewBoxes> {
    let mut out: Vec<ViewBoxes> = gt
        .iter()
        .map(|set| {
            let mut inst: BTreeMap<u32, (Label, BinaryMask)> = BTreeMap::new();
            for m in &set.masks {
                let Some(id) = m.object_id else { continue };
                inst.entry(id)
                    .or_insert_with(|| (m.label.clone(), BinaryMask::empty(set.width, set.height)))
                    .1
                    .union_with(&m.region);
            }
            let boxes = inst
                .into_iter()
                .filter_map(|(id, (label, mask))| {
                    let (x0, y0, x1, y1) = mask.bounds()?;
                    Some(BBox {
                        view_id: set.view_id.clone(),
                        object_id: Some(id),
                        label,
                        confidence: 1.0,
                        x_min: x0 as f64,
                        y_min: y0 as f64,
                        x_max: x1 as f64,
                        y_max: y1 as f64,
                    })
                })
                .collect();
            ViewBoxes {
                view_id: set.view_id.clone(),
                width: set.width,
                height: set.height,
                boxes,
            }
        })
        .collect();
    out.sort_by(|a, b| a.view_id.cmp(&b.view_id));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GaussianPrimitive, Vec3};
    use nalgebra::UnitQuaternion;

    fn cam() -> CameraView {
        CameraView::new("v", 64, 64, 100.0, 100.0, 0.0, 0.0, UnitQuaternion::identity(), Vec3::zeros())
            .unwrap()
    }

    fn object(n: u32) -> CodebookObject {
        CodebookObject {
            object_id: 0,
            gaussian_weights: (0..n).map(|i| (i, 1.0)).collect(),
            label_votes: BTreeMap::from([(Label::new("door"), 1.0)]),
            mask_refs: vec![],
            final_label: None,
            object_confidence: None,
        }
    }

    fn point(x: f64, y: f64, z: f64) -> GaussianPrimitive {
        GaussianPrimitive::isotropic(Vec3::new(x, y, z), 1e-4, 0.9).unwrap()
    }

    #[test]
    fn box_spans_projected_points() {
        // At z = 10 with f = 100 and principal point at the origin, pixel = 10 * world.
        let z = 10.0;
        let mut g = vec![point(1.0, 2.0, z), point(3.0, 4.0, z)];
        g.extend((0..4).map(|_| point(2.0, 3.0, z)));
        let scene = GaussianScene::new(g);
        let c = cam();
        let depth = DepthImage::filled(64, 64, f64::INFINITY);
        let cfg = PipelineConfig::default();
        let b = bbox_from_object(&object(6), &scene, &c, &depth, &cfg).unwrap();
        // Footprint sigma is s·|J row|, largest for the point farthest off axis.
        let sigma = 1e-4 * ((100.0 / z).powi(2) + (100.0 * 4.0 / (z * z)).powi(2)).sqrt();
        for (got, want) in [(b.x_min, 10.0), (b.y_min, 20.0), (b.x_max, 30.0), (b.y_max, 40.0)] {
            assert!((got - want).abs() <= 2.0 * sigma + 1e-9, "{got} vs {want}");
        }
        assert_eq!(b.confidence, 1.0);
    }

    #[test]
    fn behind_camera_or_occluded() {
        let c = cam();
        let cfg = PipelineConfig::default();
        let behind = GaussianScene::new((0..6).map(|_| point(0.1, 0.1, -2.0)).collect());
        let depth = DepthImage::filled(64, 64, f64::INFINITY);
        assert!(bbox_from_object(&object(6), &behind, &c, &depth, &cfg).is_none());

        let far = GaussianScene::new((0..6).map(|_| point(0.1, 0.1, 5.0)).collect());
        let occluder = DepthImage::filled(64, 64, 2.0);
        assert!(bbox_from_object(&object(6), &far, &c, &occluder, &cfg).is_none());
        assert!(bbox_from_object(&object(4), &far, &c, &depth, &cfg).is_none());
    }

    #[test]
    fn iou_pixel_convention() {
        let b = |x0: f64, x1: f64| BBox {
            view_id: "v".into(),
            object_id: None,
            label: Label::new("a"),
            confidence: 1.0,
            x_min: x0,
            y_min: 0.0,
            x_max: x1,
            y_max: 0.0,
        };
        assert_eq!(b(0.0, 0.0).area(), 1.0);
        assert_eq!(b(0.0, 3.0).iou(&b(2.0, 5.0)), 2.0 / 6.0);
    }
}
