//! Evaluation: mask association against ground truth, boxes from 3D
//! objects, and detection metrics.

pub mod boxes;
pub mod detection;
pub mod masks;

pub use boxes::{bbox_from_object, detect_boxes, gt_boxes_from_masks, BBox, ViewBoxes};
pub use detection::{detection_metrics, ClassMetrics, DetectionReport, LAMR_FPPI_POINTS};
pub use masks::{
    batch_f1, batch_f1_csv, mask_metrics, match_objects, AssociationReport, ObjectAssignment,
    DEFAULT_IOU_THRESHOLD,
};
