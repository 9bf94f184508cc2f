//! Score predictions against ground truth: detection AP/LAMR and mask F1.

use splat_codebook::codebook::{RelabeledMask, RelabeledMaskSet};
use splat_codebook::eval::{detection_metrics, mask_metrics, match_objects, BBox, ViewBoxes, DEFAULT_IOU_THRESHOLD};
use splat_codebook::model::{BinaryMask, Label};

fn bx(object_id: u32, label: &str, confidence: f64, x: f64) -> BBox {
    BBox {
        view_id: "v0".into(),
        object_id: Some(object_id),
        label: Label::new(label),
        confidence,
        x_min: x,
        y_min: 0.0,
        x_max: x + 19.0,
        y_max: 19.0,
    }
}

fn view(boxes: Vec<BBox>) -> Vec<ViewBoxes> {
    vec![ViewBoxes {
        view_id: "v0".into(),
        width: 100,
        height: 40,
        boxes,
    }]
}

fn mask(mask_id: u32, object_id: u32, x0: u32, x1: u32) -> RelabeledMask {
    RelabeledMask {
        mask_id,
        object_id: Some(object_id),
        label: Label::new("chair"),
        region: BinaryMask::from_rect(40, 20, x0, 0, x1, 19),
    }
}

fn main() {
    // two objects, three detections: one hit, one miss, one late hit
    let gt = view(vec![bx(0, "door", 1.0, 0.0), bx(1, "door", 1.0, 50.0)]);
    let pred = view(vec![
        bx(10, "door", 0.9, 0.0),
        bx(11, "door", 0.8, 25.0),
        bx(12, "door", 0.7, 50.0),
    ]);
    let report = detection_metrics(&pred, &gt, DEFAULT_IOU_THRESHOLD);
    print!("{}", report.table());

    let gt_masks = vec![RelabeledMaskSet {
        view_id: "v0".into(),
        width: 40,
        height: 20,
        masks: vec![mask(0, 0, 0, 9), mask(1, 1, 20, 29)],
    }];
    let pred_masks = vec![RelabeledMaskSet {
        view_id: "v0".into(),
        width: 40,
        height: 20,
        masks: vec![mask(0, 7, 0, 8), mask(1, 9, 24, 39)],
    }];
    let assignment = match_objects(&pred_masks, &gt_masks);
    println!("assignment {:?}", assignment.pred_to_gt);
    print!("{}", mask_metrics(&pred_masks, &gt_masks, &assignment, DEFAULT_IOU_THRESHOLD).table());
}
