use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::codebook::RelabeledMaskSet;
use crate::model::BinaryMask;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Per-object instance masks of one view: the union of all masks carrying
/// the same object id. Unassigned masks are not instances.
fn instances(set: &RelabeledMaskSet) -> BTreeMap<u32, BinaryMask> {
    let mut out: BTreeMap<u32, BinaryMask> = BTreeMap::new();
    for m in &set.masks {
        let Some(id) = m.object_id else { continue };
        out.entry(id)
            .or_insert_with(|| BinaryMask::empty(set.width, set.height))
            .union_with(&m.region);
    }
    out
}

fn by_view(sets: &[RelabeledMaskSet]) -> BTreeMap<&str, BTreeMap<u32, BinaryMask>> {
    sets.iter().map(|s| (s.view_id.as_str(), instances(s))).collect()
}

/// One-to-one pairing of predicted object ids with ground-truth ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectAssignment {
    pub pred_to_gt: BTreeMap<u32, u32>,
}

impl ObjectAssignment {
    pub fn gt_to_pred(&self) -> BTreeMap<u32, u32> {
        self.pred_to_gt.iter().map(|(&p, &g)| (g, p)).collect()
    }

    pub fn len(&self) -> usize {
        self.pred_to_gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred_to_gt.is_empty()
    }
}

/// Assignment maximizing pixel intersection summed over the ground-truth
/// views. Pairs with zero intersection are left unmatched.
pub fn match_objects(pred: &[RelabeledMaskSet], gt: &[RelabeledMaskSet]) -> ObjectAssignment {
    let pred_views = by_view(pred);
    let gt_views = by_view(gt);
    let mut inter: BTreeMap<(u32, u32), i64> = BTreeMap::new();
    let mut pred_ids = BTreeSet::new();
    let mut gt_ids = BTreeSet::new();
    for (view, g_inst) in &gt_views {
        gt_ids.extend(g_inst.keys().copied());
        let Some(p_inst) = pred_views.get(view) else { continue };
        pred_ids.extend(p_inst.keys().copied());
        for (&p, pm) in p_inst {
            for (&g, gm) in g_inst {
                let a = pm.intersection_area(gm) as i64;
                if a > 0 {
                    *inter.entry((p, g)).or_default() += a;
                }
            }
        }
    }
    if inter.is_empty() {
        return ObjectAssignment::default();
    }
    let pred_ids: Vec<u32> = pred_ids.into_iter().collect();
    let gt_ids: Vec<u32> = gt_ids.into_iter().collect();
    let n = pred_ids.len().max(gt_ids.len());
    let mut weights = Matrix::new(n, n, 0i64);
    for (&(p, g), &a) in &inter {
        let r = pred_ids.binary_search(&p).unwrap();
        let c = gt_ids.binary_search(&g).unwrap();
        weights[(r, c)] = a;
    }
    let (_, cols) = kuhn_munkres(&weights);
    let pred_to_gt = cols
        .iter()
        .enumerate()
        .filter(|&(r, &c)| r < pred_ids.len() && c < gt_ids.len() && weights[(r, c)] > 0)
        .map(|(r, &c)| (pred_ids[r], gt_ids[c]))
        .collect();
    ObjectAssignment { pred_to_gt }
}

/// Percentages in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationReport {
    pub miou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub unique_pred_masks: usize,
    pub unique_gt_masks: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Metrics that were reported as 0 because their denominator was 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

impl AssociationReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:>8} {:>10} {:>8} {:>8} {:>10} {:>8}", "mIoU", "Precision", "Recall", "F1", "#pred", "#gt").unwrap();
        writeln!(
            s,
            "{:>8.2} {:>10.2} {:>8.2} {:>8.2} {:>10} {:>8}",
            self.miou, self.precision, self.recall, self.f1, self.unique_pred_masks, self.unique_gt_masks
        )
        .unwrap();
        s
    }
}

fn ratio(num: f64, den: f64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        undefined.push(name.to_string());
        0.0
    }
}

/// Scores the ground-truth views present in `gt`; prediction views without a
/// ground-truth counterpart are ignored.
pub fn mask_metrics(
    pred: &[RelabeledMaskSet],
    gt: &[RelabeledMaskSet],
    assignment: &ObjectAssignment,
    iou_threshold: f64,
) -> AssociationReport {
    let pred_views = by_view(pred);
    let gt_views = by_view(gt);
    let gt_to_pred = assignment.gt_to_pred();
    let empty = BTreeMap::new();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut iou_sum = 0.0;
    let mut pred_ids = BTreeSet::new();
    let mut gt_ids = BTreeSet::new();
    for (view, g_inst) in &gt_views {
        let p_inst = pred_views.get(view).unwrap_or(&empty);
        gt_ids.extend(g_inst.keys().copied());
        pred_ids.extend(p_inst.keys().copied());
        let mut credited = BTreeSet::new();
        for (g, gm) in g_inst {
            let hit = gt_to_pred
                .get(g)
                .and_then(|p| p_inst.get(p).map(|pm| (*p, pm.iou(gm))))
                .filter(|&(_, iou)| iou >= iou_threshold);
            match hit {
                Some((p, iou)) => {
                    tp += 1;
                    iou_sum += iou;
                    credited.insert(p);
                }
                None => fn_ += 1,
            }
        }
        fp += p_inst.keys().filter(|p| !credited.contains(p)).count();
    }
    let mut undefined = Vec::new();
    let precision = ratio(tp as f64, (tp + fp) as f64, "precision", &mut undefined);
    let recall = ratio(tp as f64, (tp + fn_) as f64, "recall", &mut undefined);
    let f1 = ratio(2.0 * precision * recall, precision + recall, "f1", &mut undefined);
    let miou = ratio(iou_sum, tp as f64, "miou", &mut undefined);
    AssociationReport {
        miou: 100.0 * miou,
        precision: 100.0 * precision,
        recall: 100.0 * recall,
        f1: 100.0 * f1,
        unique_pred_masks: pred_ids.len(),
        unique_gt_masks: gt_ids.len(),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        undefined,
    }
}

/// F1 over consecutive batches of ground-truth views (in view-id order).
pub fn batch_f1(
    pred: &[RelabeledMaskSet],
    gt: &[RelabeledMaskSet],
    assignment: &ObjectAssignment,
    batch_size: usize,
) -> Vec<f64> {
    let mut gt_sorted: Vec<&RelabeledMaskSet> = gt.iter().collect();
    gt_sorted.sort_by(|a, b| a.view_id.cmp(&b.view_id));
    gt_sorted
        .chunks(batch_size.max(1))
        .map(|chunk| {
            let batch: Vec<RelabeledMaskSet> = chunk.iter().map(|s| (*s).clone()).collect();
            mask_metrics(pred, &batch, assignment, DEFAULT_IOU_THRESHOLD).f1
        })
        .collect()
}

/// `batch_size,batch,f1` rows for each requested batch size.
pub fn batch_f1_csv(
    pred: &[RelabeledMaskSet],
    gt: &[RelabeledMaskSet],
    assignment: &ObjectAssignment,
    batch_sizes: &[usize],
) -> String {
    let mut out = String::from("batch_size,batch,f1\n");
    for &b in batch_sizes {
        for (i, f1) in batch_f1(pred, gt, assignment, b).iter().enumerate() {
            writeln!(out, "{b},{i},{f1:.4}").unwrap();
        }
    }
    out
}
