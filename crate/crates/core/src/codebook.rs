//! Object codebook construction.
//!
//! Masks are folded into the codebook one at a time in `(view_id, mask_id)`
//! order. Afterwards objects are pruned of weakly supported Gaussians, merged
//! by mutual spatial overlap, pruned again and finally labeled by
//! confidence-weighted voting.

use std::collections::{BTreeMap, HashMap};

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;

use crate::association::{associate_projected, tolerance_map, SkipReason};
use crate::config::PipelineConfig;
use crate::depth::{project_scene, render_projected};
use crate::error::{Error, Result};
use crate::model::{
    BinaryMask, CameraView, CodebookObject, GaussianScene, Label, MaskAssociation, MaskKey,
    MaskRef, ObjectCodebook, ViewMaskSet, Warning,
};

/// `|a ∩ b| / min(|a|, |b|)` for a sorted index list and an object.
pub fn overlap(indices: &[u32], object: &CodebookObject) -> f64 {
    let denom = indices.len().min(object.gaussian_count());
    if denom == 0 {
        return 0.0;
    }
    let inter = indices.iter().filter(|&&i| object.contains(i)).count();
    inter as f64 / denom as f64
}

/// Fold one mask association into the codebook (step 2B).
///
/// Returns the id of the object that received the mask.
pub fn semantic_merge_step(
    codebook: &mut ObjectCodebook,
    assoc: &MaskAssociation,
    tau_overlap: f64,
    enable_semantic_constraint: bool,
) -> u32 {
    let mut best: Option<(usize, f64)> = None;
    for (pos, object) in codebook.objects.iter().enumerate() {
        if enable_semantic_constraint && object.best_label() != Some(&assoc.label) {
            continue;
        }
        let ov = overlap(&assoc.gaussian_indices, object);
        // objects are kept sorted by id, so `>` keeps the lowest id on ties
        if best.is_none_or(|(_, b)| ov > b) {
            best = Some((pos, ov));
        }
    }
    let mask_ref = MaskRef {
        view_id: assoc.view_id.clone(),
        mask_id: assoc.mask_id,
        confidence: assoc.confidence,
    };
    match best {
        Some((pos, ov)) if ov > tau_overlap => {
            let object = &mut codebook.objects[pos];
            for &i in &assoc.gaussian_indices {
                *object.gaussian_weights.entry(i).or_insert(0.0) += assoc.weight;
            }
            *object.label_votes.entry(assoc.label.clone()).or_insert(0.0) += assoc.confidence;
            object.mask_refs.push(mask_ref);
            object.object_id
        }
        _ => {
            let object_id = codebook.allocate_id();
            codebook.objects.push(CodebookObject {
                object_id,
                gaussian_weights: assoc.gaussian_indices.iter().map(|&i| (i, assoc.weight)).collect(),
                label_votes: BTreeMap::from([(assoc.label.clone(), assoc.confidence)]),
                mask_refs: vec![mask_ref],
                final_label: None,
                object_confidence: None,
            });
            object_id
        }
    }
}

/// Drop every Gaussian with `w < w_max · tau_filter`.
pub fn filter_low_weight(mut object: CodebookObject, tau_filter: f64) -> CodebookObject {
    let w_max = object
        .gaussian_weights
        .values()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let cutoff = w_max * tau_filter;
    object.gaussian_weights.retain(|_, w| *w >= cutoff);
    object
}

fn filter_all(codebook: &mut ObjectCodebook, tau: f64, stage: &str, warnings: &mut Vec<Warning>) {
    let objects = std::mem::take(&mut codebook.objects);
    codebook.objects = objects
        .into_par_iter()
        .map(|o| filter_low_weight(o, tau))
        .collect();
    drop_empty(codebook, stage, warnings);
}

fn drop_empty(codebook: &mut ObjectCodebook, stage: &str, warnings: &mut Vec<Warning>) {
    codebook.objects.retain(|o| {
        if o.gaussian_weights.is_empty() {
            warnings.push(Warning::for_object(stage, o.object_id, "object has no Gaussians left; dropped"));
            false
        } else {
            true
        }
    });
}

/// Whether two objects satisfy the two-sided overlap condition.
pub fn spatial_edge(intersection: usize, size_a: usize, size_b: usize, tau_spatial: f64) -> bool {
    size_a > 0
        && size_b > 0
        && intersection as f64 / size_a as f64 > tau_spatial
        && intersection as f64 / size_b as f64 > tau_spatial
}

/// Collapse connected components of the mutual-overlap graph (step 2D).
///
/// One pass; each component keeps the smallest object id.
pub fn spatial_merge(codebook: ObjectCodebook, tau_spatial: f64) -> ObjectCodebook {
    let ObjectCodebook { mut objects, next_id } = codebook;
    objects.sort_by_key(|o| o.object_id);
    let n = objects.len();

    // pairwise intersection counts through an inverted index
    let mut owners: HashMap<u32, Vec<u32>> = HashMap::new();
    for (pos, o) in objects.iter().enumerate() {
        for g in o.gaussian_indices() {
            owners.entry(g).or_default().push(pos as u32);
        }
    }
    let mut inter: HashMap<(u32, u32), usize> = HashMap::new();
    for list in owners.values() {
        for (k, &a) in list.iter().enumerate() {
            for &b in &list[k + 1..] {
                *inter.entry((a, b)).or_insert(0) += 1;
            }
        }
    }

    let mut uf = UnionFind::<usize>::new(n);
    for (&(a, b), &count) in &inter {
        let (a, b) = (a as usize, b as usize);
        if spatial_edge(count, objects[a].gaussian_count(), objects[b].gaussian_count(), tau_spatial) {
            uf.union(a, b);
        }
    }

    // objects are sorted by id, so the first member seen is the survivor
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for pos in 0..n {
        groups.entry(uf.find(pos)).or_default().push(pos);
    }
    let mut slots: Vec<Option<CodebookObject>> = objects.into_iter().map(Some).collect();
    let mut merged: Vec<CodebookObject> = groups
        .into_values()
        .map(|members| {
            let mut it = members.into_iter();
            let mut acc = slots[it.next().unwrap()].take().unwrap();
            for pos in it {
                let other = slots[pos].take().unwrap();
                for (g, w) in other.gaussian_weights {
                    *acc.gaussian_weights.entry(g).or_insert(0.0) += w;
                }
                for (l, v) in other.label_votes {
                    *acc.label_votes.entry(l).or_insert(0.0) += v;
                }
                acc.mask_refs.extend(other.mask_refs);
            }
            acc.final_label = None;
            acc
        })
        .collect();
    merged.sort_by_key(|o| o.object_id);
    ObjectCodebook { objects: merged, next_id }
}

/// Confidence-weighted label vote (step 2F); stores and returns the winner.
pub fn vote_label(object: &mut CodebookObject) -> Option<Label> {
    let label = object.best_label().cloned();
    object.final_label = label.clone();
    label
}

/// Associations for every mask of one view, in mask id order.
fn associate_view(
    scene: &GaussianScene,
    cam: &CameraView,
    masks: &ViewMaskSet,
    cfg: &PipelineConfig,
) -> Vec<(u32, std::result::Result<MaskAssociation, SkipReason>)> {
    let projected = project_scene(scene, cam, cfg.near);
    let depth = render_projected(scene, cam, &projected).depth;
    masks
        .masks
        .iter()
        .map(|mask| {
            let tol = tolerance_map(
                &depth,
                &mask.region,
                cfg.depth_bound,
                cfg.neighborhood_half_width,
                cfg.neighborhood_rule,
            );
            (mask.mask_id, associate_projected(&projected, cam, mask, &depth, &tol, cfg))
        })
        .collect()
}

fn check_inputs(
    scene: &GaussianScene,
    views: &[CameraView],
    mask_sets: &[ViewMaskSet],
) -> Result<()> {
    if scene.is_empty() {
        return Err(Error::Data("scene has no Gaussians".into()));
    }
    for set in mask_sets {
        let Some(cam) = views.iter().find(|v| v.view_id == set.view_id) else {
            return Err(Error::Data(format!("masks reference unknown view '{}'", set.view_id)));
        };
        if cam.width != set.width || cam.height != set.height {
            return Err(Error::Data(format!(
                "view '{}': masks are {}x{}, camera is {}x{}",
                set.view_id, set.width, set.height, cam.width, cam.height
            )));
        }
    }
    Ok(())
}

/// Wall-clock seconds spent per stage.
pub type StageTimings = Vec<(String, f64)>;

/// Build the codebook (steps 2A–2F).
pub fn build_codebook(
    scene: &GaussianScene,
    views: &[CameraView],
    mask_sets: &[ViewMaskSet],
    cfg: &PipelineConfig,
) -> Result<(ObjectCodebook, Vec<Warning>)> {
    build_codebook_timed(scene, views, mask_sets, cfg).map(|(c, w, _)| (c, w))
}

pub fn build_codebook_timed(
    scene: &GaussianScene,
    views: &[CameraView],
    mask_sets: &[ViewMaskSet],
    cfg: &PipelineConfig,
) -> Result<(ObjectCodebook, Vec<Warning>, StageTimings)> {
    cfg.validate()?;
    check_inputs(scene, views, mask_sets)?;
    let mut timings = StageTimings::new();
    let mut warnings = Vec::new();

    let mut work: Vec<(&CameraView, &ViewMaskSet)> = mask_sets
        .iter()
        .map(|set| (views.iter().find(|v| v.view_id == set.view_id).unwrap(), set))
        .collect();
    work.sort_by(|a, b| a.0.view_id.cmp(&b.0.view_id));

    let t = std::time::Instant::now();
    let associations: Vec<_> = work
        .par_iter()
        .map(|(cam, set)| associate_view(scene, cam, set, cfg))
        .collect();
    timings.push(("2A-association".into(), t.elapsed().as_secs_f64()));

    let t = std::time::Instant::now();
    let mut codebook = ObjectCodebook::new();
    for ((cam, _), per_view) in work.iter().zip(associations) {
        for (mask_id, result) in per_view {
            match result {
                Ok(assoc) => {
                    semantic_merge_step(
                        &mut codebook,
                        &assoc,
                        cfg.tau_overlap,
                        cfg.enable_semantic_constraint,
                    );
                }
                Err(reason) => {
                    warnings.push(Warning::for_mask("2A", &cam.view_id, mask_id, reason.message()))
                }
            }
        }
    }
    timings.push(("2B-semantic-merge".into(), t.elapsed().as_secs_f64()));

    if cfg.enable_filter1 {
        let t = std::time::Instant::now();
        filter_all(&mut codebook, cfg.tau_filter1, "2C", &mut warnings);
        timings.push(("2C-filter1".into(), t.elapsed().as_secs_f64()));
    }
    if cfg.enable_spatial_merge {
        let t = std::time::Instant::now();
        codebook = spatial_merge(codebook, cfg.tau_spatial);
        timings.push(("2D-spatial-merge".into(), t.elapsed().as_secs_f64()));
    }
    if cfg.enable_filter2 {
        let t = std::time::Instant::now();
        filter_all(&mut codebook, cfg.tau_filter2, "2E", &mut warnings);
        timings.push(("2E-filter2".into(), t.elapsed().as_secs_f64()));
    }
    for object in &mut codebook.objects {
        vote_label(object);
    }
    Ok((codebook, warnings, timings))
}

/// A mask after relabeling; `object_id` is `None` for unassigned masks.
#[derive(Debug, Clone, PartialEq)]
pub struct RelabeledMask {
    pub mask_id: u32,
    pub object_id: Option<u32>,
    pub label: Label,
    pub region: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelabeledMaskSet {
    pub view_id: String,
    pub width: u32,
    pub height: u32,
    pub masks: Vec<RelabeledMask>,
}

/// Give every contributing mask the id and final label of its object.
pub fn relabel_masks(codebook: &ObjectCodebook, mask_sets: &[ViewMaskSet]) -> Vec<RelabeledMaskSet> {
    let mut owner: HashMap<MaskKey, (u32, Option<&Label>)> = HashMap::new();
    for object in &codebook.objects {
        for r in &object.mask_refs {
            owner.insert(r.key(), (object.object_id, object.label()));
        }
    }
    let mut sets: Vec<RelabeledMaskSet> = mask_sets
        .iter()
        .map(|set| RelabeledMaskSet {
            view_id: set.view_id.clone(),
            width: set.width,
            height: set.height,
            masks: set
                .masks
                .iter()
                .map(|m| {
                    let key = MaskKey {
                        view_id: set.view_id.clone(),
                        mask_id: m.mask_id,
                    };
                    let (object_id, label) = match owner.get(&key) {
                        Some(&(id, label)) => (Some(id), label.cloned().unwrap_or_else(|| m.label.clone())),
                        None => (None, m.label.clone()),
                    };
                    RelabeledMask {
                        mask_id: m.mask_id,
                        object_id,
                        label,
                        region: m.region.clone(),
                    }
                })
                .collect(),
        })
        .collect();
    sets.sort_by(|a, b| a.view_id.cmp(&b.view_id));
    sets
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assoc(view: &str, mask_id: u32, label: &str, conf: f64, weight: f64, idx: impl IntoIterator<Item = u32>) -> MaskAssociation {
        let mut gaussian_indices: Vec<u32> = idx.into_iter().collect();
        gaussian_indices.sort_unstable();
        MaskAssociation {
            view_id: view.into(),
            mask_id,
            gaussian_indices,
            weight,
            label: Label::new(label),
            confidence: conf,
        }
    }

    pub(crate) fn object(id: u32, idx: impl IntoIterator<Item = u32>) -> CodebookObject {
        CodebookObject {
            object_id: id,
            gaussian_weights: idx.into_iter().map(|i| (i, 1.0)).collect(),
            label_votes: BTreeMap::from([(Label::new("thing"), 1.0)]),
            mask_refs: vec![MaskRef {
                view_id: "v".into(),
                mask_id: id,
                confidence: 1.0,
            }],
            final_label: None,
            object_confidence: None,
        }
    }

    #[test]
    fn first_mask_creates_object() {
        let mut cb = ObjectCodebook::new();
        let id = semantic_merge_step(&mut cb, &assoc("a", 0, "door", 0.7, 1.0, 1..=3), 0.2, true);
        assert_eq!(id, 0);
        assert_eq!(cb.len(), 1);
        assert_eq!(cb.objects[0].label_votes[&Label::new("door")], 0.7);
    }

    #[test]
    fn same_label_overlap_merges() {
        let mut cb = ObjectCodebook::new();
        semantic_merge_step(&mut cb, &assoc("a", 0, "door", 0.9, 1.0, 1..=10), 0.2, true);
        // 5 shared / min(7, 10)
        assert!((overlap(&(6..=12).collect::<Vec<_>>(), &cb.objects[0]) - 5.0 / 7.0).abs() < 1e-12);
        semantic_merge_step(&mut cb, &assoc("b", 0, "door", 0.8, 0.5, 6..=12), 0.2, true);
        assert_eq!(cb.len(), 1);
        let o = &cb.objects[0];
        assert_eq!(o.gaussian_indices().collect::<Vec<_>>(), (1..=12).collect::<Vec<_>>());
        assert_eq!(o.gaussian_weights[&6], 1.5);
        assert_eq!(o.gaussian_weights[&1], 1.0);
        assert_eq!(o.gaussian_weights[&12], 0.5);
        assert!((o.label_votes[&Label::new("door")] - 1.7).abs() < 1e-12);
        assert_eq!(o.mask_refs.len(), 2);
    }

    #[test]
    fn different_label_creates_new_object() {
        let mut cb = ObjectCodebook::new();
        semantic_merge_step(&mut cb, &assoc("a", 0, "door", 0.9, 1.0, 1..=10), 0.2, true);
        semantic_merge_step(&mut cb, &assoc("a", 1, "window", 0.9, 1.0, 3..=5), 0.2, true);
        assert_eq!(cb.len(), 2);
        // without the constraint the nested window is absorbed
        let mut cb = ObjectCodebook::new();
        semantic_merge_step(&mut cb, &assoc("a", 0, "door", 0.9, 1.0, 1..=10), 0.2, false);
        semantic_merge_step(&mut cb, &assoc("a", 1, "window", 0.9, 1.0, 3..=5), 0.2, false);
        assert_eq!(cb.len(), 1);
    }

    #[test]
    fn merge_goes_to_best_overlap_lowest_id_on_tie() {
        let mut cb = ObjectCodebook::new();
        semantic_merge_step(&mut cb, &assoc("a", 0, "x", 1.0, 1.0, 0..10), 0.2, true);
        semantic_merge_step(&mut cb, &assoc("a", 1, "x", 1.0, 1.0, 100..110), 0.2, true);
        semantic_merge_step(&mut cb, &assoc("a", 2, "x", 1.0, 1.0, 200..210), 0.2, true);
        let target = semantic_merge_step(&mut cb, &assoc("b", 0, "x", 1.0, 1.0, (5..10).chain(100..110)), 0.2, true);
        assert_eq!(target, 1);
        let target = semantic_merge_step(&mut cb, &assoc("b", 1, "x", 1.0, 1.0, (5..10).chain(205..210)), 0.2, true);
        assert_eq!(target, 0);
    }

    #[test]
    fn overlap_at_threshold_does_not_merge() {
        let mut cb = ObjectCodebook::new();
        semantic_merge_step(&mut cb, &assoc("a", 0, "x", 1.0, 1.0, 0..10), 0.2, true);
        // 2 / min(10, 10) = 0.2, not > 0.2
        semantic_merge_step(&mut cb, &assoc("b", 0, "x", 1.0, 1.0, 8..18), 0.2, true);
        assert_eq!(cb.len(), 2);
    }

    #[test]
    fn low_weight_filter() {
        let mut o = object(0, []);
        o.gaussian_weights = BTreeMap::from([(0, 1.0), (1, 0.5), (2, 0.3)]);
        let f = filter_low_weight(o.clone(), 0.4);
        assert_eq!(f.gaussian_indices().collect::<Vec<_>>(), vec![0, 1]);
        o.gaussian_weights = BTreeMap::from([(0, 1.0), (1, 0.4), (2, 0.3999)]);
        let f = filter_low_weight(o.clone(), 0.4);
        assert_eq!(f.gaussian_indices().collect::<Vec<_>>(), vec![0, 1]);
        o.gaussian_weights = BTreeMap::from([(7, 0.01)]);
        assert_eq!(filter_low_weight(o.clone(), 0.9).gaussian_count(), 1);
    }

    #[test]
    fn spatial_merge_cases() {
        let cb = ObjectCodebook::from_objects(vec![object(0, 0..5), object(1, 10..15)]).unwrap();
        assert_eq!(spatial_merge(cb.clone(), 0.3), cb);

        let cb = ObjectCodebook::from_objects(vec![object(0, 1..=10), object(1, (1..=9).chain([11]))]).unwrap();
        let m = spatial_merge(cb, 0.3);
        assert_eq!(m.len(), 1);
        assert_eq!(m.objects[0].gaussian_indices().collect::<Vec<_>>(), (1..=11).collect::<Vec<_>>());
        assert_eq!(m.objects[0].gaussian_weights[&1], 2.0);
        assert_eq!(m.objects[0].gaussian_weights[&10], 1.0);
        assert_eq!(m.objects[0].mask_refs.len(), 2);
        assert_eq!(m.objects[0].label_votes[&Label::new("thing")], 2.0);

        let cb = ObjectCodebook::from_objects(vec![object(0, 1..=100), object(1, 1..=5)]).unwrap();
        assert_eq!(spatial_merge(cb, 0.3).len(), 2);
    }

    #[test]
    fn spatial_merge_is_transitive_and_keeps_smallest_id() {
        // A–B and B–C overlap, A and C do not
        let cb = ObjectCodebook::from_objects(vec![
            object(4, 0..10),
            object(2, 5..15),
            object(9, 10..20),
            object(3, 100..110),
        ])
        .unwrap();
        let m = spatial_merge(cb, 0.3);
        let ids: Vec<_> = m.objects.iter().map(|o| o.object_id).collect();
        assert_eq!(ids, vec![2, 3]);
        assert_eq!(m.objects[0].gaussian_count(), 20);
        assert_eq!(m.next_id, 10);
    }

    #[test]
    fn voting() {
        let mut o = object(0, [1]);
        o.label_votes = BTreeMap::from([(Label::new("door"), 0.9 + 0.8), (Label::new("window"), 0.95)]);
        assert_eq!(vote_label(&mut o).unwrap().as_str(), "door");
        assert_eq!(o.final_label.as_ref().unwrap().as_str(), "door");
        o.label_votes = BTreeMap::from([(Label::new("b"), 0.5), (Label::new("a"), 0.5)]);
        assert_eq!(vote_label(&mut o).unwrap().as_str(), "a");
    }
}
