//! End-to-end runs: codebook construction, post-processing, relabeling,
//! boxes and evaluation.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::Serialize;

use crate::codebook::{build_codebook_timed, relabel_masks, RelabeledMaskSet, StageTimings};
use crate::config::{PipelineConfig, Stage};
use crate::error::Result;
use crate::eval::{
    detect_boxes, detection_metrics, gt_boxes_from_masks, mask_metrics, match_objects, AssociationReport,
    DetectionReport, ViewBoxes, DEFAULT_IOU_THRESHOLD,
};
use crate::model::{CameraView, GaussianScene, ObjectCodebook, ViewMaskSet, Warning};
use crate::postprocess::postprocess;

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub codebook: ObjectCodebook,
    pub warnings: Vec<Warning>,
    pub timings: StageTimings,
    /// Whether object filtering and outlier removal were applied.
    pub postprocessed: bool,
}

pub fn distinct_labels(mask_sets: &[ViewMaskSet]) -> usize {
    mask_sets
        .iter()
        .flat_map(|s| s.masks.iter().map(|m| &m.label))
        .collect::<BTreeSet<_>>()
        .len()
}

/// Build the codebook, then post-process it according to `cfg.postprocess_mode`.
pub fn run_pipeline(
    scene: &GaussianScene,
    views: &[CameraView],
    mask_sets: &[ViewMaskSet],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let (codebook, mut warnings, mut timings) = build_codebook_timed(scene, views, mask_sets, cfg)?;
    let postprocessed = cfg.postprocess_mode.resolve(distinct_labels(mask_sets));
    let codebook = if postprocessed {
        let t = Instant::now();
        let cb = postprocess(codebook, scene, cfg, &mut warnings);
        timings.push(("3-postprocess".into(), t.elapsed().as_secs_f64()));
        cb
    } else {
        codebook
    };
    Ok(PipelineOutput {
        codebook,
        warnings,
        timings,
        postprocessed,
    })
}

/// Scores of one pipeline run against ground truth.
#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub objects: usize,
    pub masks: AssociationReport,
    pub detection: DetectionReport,
}

/// Ground truth for scoring a run.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub masks: Vec<RelabeledMaskSet>,
    pub boxes: Vec<ViewBoxes>,
}

impl GroundTruth {
    /// Boxes taken as the tight bounds of the ground-truth masks.
    pub fn from_masks(masks: Vec<RelabeledMaskSet>) -> Self {
        let boxes = gt_boxes_from_masks(&masks);
        Self { masks, boxes }
    }
}

/// Relabel, box and score a finished codebook.
pub fn evaluate(
    codebook: &ObjectCodebook,
    scene: &GaussianScene,
    views: &[CameraView],
    mask_sets: &[ViewMaskSet],
    gt: &GroundTruth,
    cfg: &PipelineConfig,
) -> Evaluation {
    let pred = relabel_masks(codebook, mask_sets);
    let assignment = match_objects(&pred, &gt.masks);
    let masks = mask_metrics(&pred, &gt.masks, &assignment, DEFAULT_IOU_THRESHOLD);
    let boxes: Vec<ViewBoxes> = detect_boxes(codebook, scene, views, cfg);
    let detection = detection_metrics(&boxes, &gt.boxes, DEFAULT_IOU_THRESHOLD);
    Evaluation {
        objects: codebook.len(),
        masks,
        detection,
    }
}

/// One row of an ablation matrix: `disabled` is `None` for the full pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub disabled: Option<Stage>,
    pub evaluation: Evaluation,
}

/// Run the full pipeline, then once more with each of `stages` disabled.
pub fn ablate(
    scene: &GaussianScene,
    views: &[CameraView],
    mask_sets: &[ViewMaskSet],
    gt: &GroundTruth,
    cfg: &PipelineConfig,
    stages: &[Stage],
) -> Result<Vec<AblationRow>> {
    std::iter::once(None)
        .chain(stages.iter().copied().map(Some))
        .map(|disabled| {
            let mut c = cfg.clone();
            if let Some(s) = disabled {
                c.set_stage(s, false);
            }
            let out = run_pipeline(scene, views, mask_sets, &c)?;
            Ok(AblationRow {
                disabled,
                evaluation: evaluate(&out.codebook, scene, views, mask_sets, gt, &c),
            })
        })
        .collect()
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:<24} {:>7} {:>8} {:>10} {:>8} {:>8} {:>8} {:>8}\n",
        "variant", "objects", "mIoU", "Precision", "Recall", "F1", "mAP", "mLAMR"
    );
    for r in rows {
        let name = r.disabled.map_or("full".to_string(), |st| format!("w/o {st}"));
        let (m, d) = (&r.evaluation.masks, &r.evaluation.detection);
        s += &format!(
            "{:<24} {:>7} {:>8.2} {:>10.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
            name, r.evaluation.objects, m.miou, m.precision, m.recall, m.f1, d.map, d.mlamr
        );
    }
    s
}
