use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::boxes::{BBox, ViewBoxes};
use crate::model::Label;

/// Number of log-spaced FPPI reference points in `[1e-2, 1]`.
pub const LAMR_FPPI_POINTS: usize = 9;
const MISS_RATE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub gt_count: usize,
    pub pred_count: usize,
    /// Fractions in `[0, 1]`; `None` for classes without ground truth.
    pub ap: Option<f64>,
    pub lamr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Class means, ×100.
    pub map: f64,
    pub mlamr: f64,
    pub classes: Vec<ClassMetrics>,
    /// Classes with predictions but no ground truth; excluded from the means.
    pub excluded_classes: Vec<Label>,
}

impl DetectionReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<16} {:>6} {:>6} {:>8} {:>8}", "class", "#gt", "#pred", "AP", "LAMR").unwrap();
        for c in &self.classes {
            let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v));
            writeln!(s, "{:<16} {:>6} {:>6} {:>8} {:>8}", c.label, c.gt_count, c.pred_count, f(c.ap), f(c.lamr)).unwrap();
        }
        writeln!(s, "{:<16} {:>6} {:>6} {:>8.2} {:>8.2}", "mean", "", "", self.map, self.mlamr).unwrap();
        s
    }
}

/// Precision/recall/FPPI after each distinct confidence level.
struct Curve {
    recall: Vec<f64>,
    precision: Vec<f64>,
    fp: Vec<usize>,
}

fn rank_order(a: &&BBox, b: &&BBox) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.object_id.cmp(&b.object_id))
        .then(a.view_id.cmp(&b.view_id))
}

fn class_curve(preds: &mut [&BBox], gts: &BTreeMap<&str, Vec<&BBox>>, n_gt: usize, iou_threshold: f64) -> Curve {
    preds.sort_by(rank_order);
    let mut taken: BTreeMap<&str, Vec<bool>> = gts.iter().map(|(v, g)| (*v, vec![false; g.len()])).collect();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve = Curve {
        recall: vec![],
        precision: vec![],
        fp: vec![],
    };
    for (k, p) in preds.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        if let Some(cands) = gts.get(p.view_id.as_str()) {
            let used = &taken[p.view_id.as_str()];
            for (j, g) in cands.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let iou = p.iou(g);
                if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
        }
        match best {
            Some((j, _)) => {
                taken.get_mut(p.view_id.as_str()).unwrap()[j] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        let group_end = preds.get(k + 1).is_none_or(|q| q.confidence != p.confidence);
        if group_end {
            curve.recall.push(tp as f64 / n_gt as f64);
            curve.precision.push(tp as f64 / (tp + fp) as f64);
            curve.fp.push(fp);
        }
    }
    curve
}

/// All-point interpolated area under the precision envelope.
fn average_precision(c: &Curve) -> f64 {
    let mut env = c.precision.clone();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    let mut prev = 0.0;
    let mut ap = 0.0;
    for (r, p) in c.recall.iter().zip(&env) {
        ap += (r - prev) * p;
        prev = *r;
    }
    ap
}

/// Reference FPPI values `10^(-2 + i/4)`, `i = 0..9`.
pub fn fppi_references() -> [f64; LAMR_FPPI_POINTS] {
    std::array::from_fn(|i| 10f64.powf(-2.0 + 2.0 * i as f64 / (LAMR_FPPI_POINTS - 1) as f64))
}

fn log_average_miss_rate(c: &Curve, images: usize) -> f64 {
    let mean_log = fppi_references()
        .iter()
        .map(|&r| {
            let miss = c
                .fp
                .iter()
                .zip(&c.recall)
                .filter(|(&fp, _)| fp as f64 / images as f64 <= r)
                .map(|(_, rec)| 1.0 - rec)
                .fold(1.0, f64::min);
            miss.max(MISS_RATE_FLOOR).ln()
        })
        .sum::<f64>()
        / LAMR_FPPI_POINTS as f64;
    mean_log.exp()
}

/// mAP and mLAMR over classes. The images are the ground-truth views;
/// predictions in other views are ignored.
pub fn detection_metrics(pred: &[ViewBoxes], gt: &[ViewBoxes], iou_threshold: f64) -> DetectionReport {
    let views: BTreeSet<&str> = gt.iter().map(|v| v.view_id.as_str()).collect();
    let images = views.len().max(1);
    let mut gt_by_class: BTreeMap<&Label, BTreeMap<&str, Vec<&BBox>>> = BTreeMap::new();
    let mut gt_count: BTreeMap<&Label, usize> = BTreeMap::new();
    for v in gt {
        for b in &v.boxes {
            gt_by_class.entry(&b.label).or_default().entry(&v.view_id).or_default().push(b);
            *gt_count.entry(&b.label).or_default() += 1;
        }
    }
    let mut pred_by_class: BTreeMap<&Label, Vec<&BBox>> = BTreeMap::new();
    for v in pred.iter().filter(|v| views.contains(v.view_id.as_str())) {
        for b in &v.boxes {
            pred_by_class.entry(&b.label).or_default().push(b);
        }
    }
    let labels: BTreeSet<&Label> = gt_count.keys().chain(pred_by_class.keys()).copied().collect();
    let empty_gt = BTreeMap::new();
    let mut classes = Vec::new();
    let mut excluded = Vec::new();
    for label in labels {
        let n_gt = gt_count.get(label).copied().unwrap_or(0);
        let mut preds = pred_by_class.remove(label).unwrap_or_default();
        let pred_count = preds.len();
        let (ap, lamr) = if n_gt == 0 {
            excluded.push(label.clone());
            (None, None)
        } else {
            let gts = gt_by_class.get(label).unwrap_or(&empty_gt);
            let curve = class_curve(&mut preds, gts, n_gt, iou_threshold);
            (Some(average_precision(&curve)), Some(log_average_miss_rate(&curve, images)))
        };
        classes.push(ClassMetrics {
            label: label.clone(),
            gt_count: n_gt,
            pred_count,
            ap,
            lamr,
        });
    }
    let scored: Vec<&ClassMetrics> = classes.iter().filter(|c| c.ap.is_some()).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if scored.is_empty() {
            0.0
        } else {
            100.0 * scored.iter().map(|c| f(c)).sum::<f64>() / scored.len() as f64
        }
    };
    DetectionReport {
        map: mean(|c| c.ap.unwrap()),
        mlamr: mean(|c| c.lamr.unwrap()),
        classes,
        excluded_classes: excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(view: &str, id: u32, label: &str, conf: f64, x: f64) -> BBox {
        BBox {
            view_id: view.into(),
            object_id: Some(id),
            label: Label::new(label),
            confidence: conf,
            x_min: x,
            y_min: 0.0,
            x_max: x + 9.0,
            y_max: 9.0,
        }
    }

    fn view(id: &str, boxes: Vec<BBox>) -> ViewBoxes {
        ViewBoxes {
            view_id: id.into(),
            width: 100,
            height: 100,
            boxes,
        }
    }

    #[test]
    fn hand_example() {
        let gt = vec![view("v", vec![bx("v", 0, "a", 1.0, 0.0), bx("v", 1, "a", 1.0, 50.0)])];
        let pred = vec![view(
            "v",
            vec![bx("v", 10, "a", 0.9, 0.0), bx("v", 11, "a", 0.8, 25.0), bx("v", 12, "a", 0.7, 50.0)],
        )];
        let r = detection_metrics(&pred, &gt, 0.5);
        assert!((r.map - 83.333_333).abs() < 1e-3, "{}", r.map);
    }

    #[test]
    fn perfect_and_empty() {
        let gt = vec![view("v", vec![bx("v", 0, "a", 1.0, 0.0), bx("v", 1, "b", 1.0, 50.0)])];
        let r = detection_metrics(&gt, &gt, 0.5);
        assert_eq!(r.map, 100.0);
        assert!(r.mlamr < 1e-6);
        let r = detection_metrics(&[], &gt, 0.5);
        assert_eq!(r.map, 0.0);
        assert!((r.mlamr - 100.0).abs() < 1e-9);
    }

    #[test]
    fn class_without_gt_is_excluded() {
        let gt = vec![view("v", vec![bx("v", 0, "a", 1.0, 0.0)])];
        let pred = vec![view("v", vec![bx("v", 0, "a", 1.0, 0.0), bx("v", 3, "z", 0.5, 40.0)])];
        let r = detection_metrics(&pred, &gt, 0.5);
        assert_eq!(r.map, 100.0);
        assert_eq!(r.excluded_classes, vec![Label::new("z")]);
    }

    #[test]
    fn fppi_grid() {
        let r = fppi_references();
        assert!((r[0] - 0.01).abs() < 1e-15 && (r[8] - 1.0).abs() < 1e-15);
    }
}
