//! Deterministic synthetic scenes with ground truth.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, tag, entity)`,
//! so objects and views can be generated in parallel and in any order.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{RelabeledMask, RelabeledMaskSet};
use crate::config::PipelineConfig;
use crate::eval::{detect_boxes, ViewBoxes};
use crate::depth::{render_depth_with_owner, DEFAULT_NEAR};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{
    BinaryMask, CameraView, CodebookObject, GaussianPrimitive, GaussianScene, Label, MaskInstance, ObjectCodebook, Vec3,
    ViewMaskSet,
};

pub const TAG_OBJECT: u64 = 1;
pub const TAG_FLOATER: u64 = 2;
pub const TAG_MASK: u64 = 3;
pub const TAG_SPURIOUS: u64 = 4;

/// Ground-truth id of Gaussians that belong to no object.
pub const FLOATER_ID: i64 = -1;

pub const DEFAULT_VOCABULARY: [&str; 12] = [
    "door", "window", "wall", "chair", "table", "sofa", "lamp", "cabinet", "plant", "monitor",
    "shelf", "bed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Box,
    Sphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthObject {
    pub label: String,
    pub shape: Shape,
    pub center: [f64; 3],
    /// Half-sizes for boxes, radii for spheres (ellipsoids).
    pub extent: [f64; 3],
    pub gaussians: usize,
    #[serde(default = "default_opacity")]
    pub opacity: f64,
    /// Index of an enclosing object whose masks also cover this one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nested_in: Option<usize>,
}

fn default_opacity() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FloaterSpec {
    pub count: usize,
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub scale: f64,
    pub opacity: f64,
}

impl Default for FloaterSpec {
    fn default() -> Self {
        Self {
            count: 0,
            min: [-4.0, -4.0, 0.0],
            max: [4.0, 4.0, 2.5],
            scale: 0.03,
            opacity: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CameraPath {
    /// Cameras on a horizontal circle around `target`, world z up.
    Orbit {
        count: usize,
        radius: f64,
        height: f64,
        target: [f64; 3],
    },
    /// Cameras evenly spaced from `start` to `end`, all looking at `look_at`.
    Corridor {
        count: usize,
        start: [f64; 3],
        end: [f64; 3],
        look_at: [f64; 3],
    },
}

impl CameraPath {
    pub fn count(&self) -> usize {
        match self {
            CameraPath::Orbit { count, .. } | CameraPath::Corridor { count, .. } => *count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageSpec {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
}

impl Default for ImageSpec {
    fn default() -> Self {
        Self {
            width: 480,
            height: 360,
            focal: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub label_flip_rate: f64,
    /// Range for both the detection and the segmentation confidence.
    pub confidence_range: [f64; 2],
    pub mask_erosion_px: u32,
    pub drop_rate: f64,
    /// Per visible object, chance of one extra random-blob mask in the view.
    pub spurious_rate: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            label_flip_rate: 0.0,
            confidence_range: [0.8, 1.0],
            mask_erosion_px: 0,
            drop_rate: 0.0,
            spurious_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub objects: Vec<SynthObject>,
    #[serde(default)]
    pub floaters: FloaterSpec,
    pub cameras: CameraPath,
    #[serde(default)]
    pub image: ImageSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_vocabulary")]
    pub vocabulary: Vec<String>,
    /// Smallest visible area, in pixels, for an object to get a mask.
    #[serde(default = "default_min_mask_area")]
    pub min_mask_area: usize,
}

fn default_vocabulary() -> Vec<String> {
    DEFAULT_VOCABULARY.iter().map(|s| s.to_string()).collect()
}

fn default_min_mask_area() -> usize {
    30
}

fn obj(label: &str, shape: Shape, center: [f64; 3], extent: [f64; 3], gaussians: usize) -> SynthObject {
    SynthObject {
        label: label.into(),
        shape,
        center,
        extent,
        gaussians,
        opacity: default_opacity(),
        nested_in: None,
    }
}

impl SynthSpec {
    /// Eight objects (a cabinet with a nested window and door, five
    /// free-standing objects), 40k Gaussians, 24 orbit views, no noise.
    pub fn room(seed: u64) -> Self {
        let mut window = obj("window", Shape::Box, [0.5, -0.62, 1.05], [0.3, 0.03, 0.25], 500);
        window.nested_in = Some(0);
        let mut door = obj("door", Shape::Box, [-0.5, -0.62, 0.6], [0.3, 0.03, 0.5], 500);
        door.nested_in = Some(0);
        Self {
            seed,
            objects: vec![
                obj("cabinet", Shape::Box, [0.0, 0.0, 0.8], [1.2, 0.6, 0.8], 14000),
                window,
                door,
                obj("chair", Shape::Sphere, [2.5, 1.5, 0.5], [0.5, 0.5, 0.5], 5000),
                obj("table", Shape::Box, [-2.5, 1.5, 0.4], [0.6, 0.4, 0.4], 5000),
                obj("lamp", Shape::Sphere, [2.5, -2.0, 0.8], [0.35, 0.35, 0.35], 5000),
                obj("shelf", Shape::Box, [-2.5, -2.0, 0.6], [0.4, 0.3, 0.6], 5000),
                obj("plant", Shape::Sphere, [0.0, 2.8, 0.5], [0.45, 0.45, 0.45], 5000),
            ],
            floaters: FloaterSpec::default(),
            cameras: CameraPath::Orbit {
                count: 24,
                radius: 8.0,
                height: 3.0,
                target: [0.0, 0.0, 0.8],
            },
            image: ImageSpec::default(),
            noise: NoiseSpec::default(),
            vocabulary: default_vocabulary(),
            min_mask_area: default_min_mask_area(),
        }
    }

    /// [`SynthSpec::room`] with every noise source switched on.
    pub fn noisy_room(seed: u64) -> Self {
        let mut spec = Self::room(seed);
        spec.floaters.count = 200;
        spec.noise = NoiseSpec {
            label_flip_rate: 0.15,
            confidence_range: [0.8, 1.0],
            mask_erosion_px: 2,
            drop_rate: 0.2,
            spurious_rate: 0.1,
        };
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        for (name, r) in [
            ("label_flip_rate", n.label_flip_rate),
            ("drop_rate", n.drop_rate),
            ("spurious_rate", n.spurious_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Data(format!("{name} {r} outside [0, 1]")));
            }
        }
        let [lo, hi] = n.confidence_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Data(format!("confidence_range [{lo}, {hi}] invalid")));
        }
        if self.objects.is_empty() {
            return Err(Error::Data("spec has no objects".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.gaussians == 0 || o.extent.iter().any(|&e| !(e > 0.0)) {
                return Err(Error::Data(format!("object {i}: counts and extents must be positive")));
            }
            if !(o.opacity > 0.0 && o.opacity <= 1.0) {
                return Err(Error::Data(format!("object {i}: opacity {} outside (0, 1]", o.opacity)));
            }
            if let Some(p) = o.nested_in {
                if p >= self.objects.len() || p == i {
                    return Err(Error::Data(format!("object {i}: bad nested_in {p}")));
                }
            }
        }
        if self.cameras.count() == 0 {
            return Err(Error::Data("camera count must be positive".into()));
        }
        if self.vocabulary.len() < 2 {
            return Err(Error::Data("vocabulary needs at least two labels".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for one entity.
pub fn entity_rng(seed: u64, tag: u64, entity: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag ^ splitmix64(entity))))
}

/// Mask-noise stream entity for object `object` in view `view`.
pub fn mask_entity(view: usize, object: usize) -> u64 {
    ((view as u64) << 32) | object as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub scene: GaussianScene,
    /// Object index per Gaussian, or [`FLOATER_ID`].
    pub gt: Vec<i64>,
}

fn sample_in(shape: Shape, rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let p = Vec3::new(
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        );
        if shape == Shape::Box || p.norm_squared() <= 1.0 {
            return p;
        }
    }
}

pub fn generate_scene(spec: &SynthSpec) -> Result<SynthScene> {
    spec.validate()?;
    let per_object: Vec<Vec<GaussianPrimitive>> = spec
        .objects
        .par_iter()
        .enumerate()
        .map(|(k, o)| {
            let mut rng = entity_rng(spec.seed, TAG_OBJECT, k as u64);
            let c = Vec3::from(o.center);
            let e = Vec3::from(o.extent);
            let sigma = e.mean() / 20.0;
            (0..o.gaussians)
                .map(|_| {
                    let u = sample_in(o.shape, &mut rng);
                    GaussianPrimitive::isotropic(c + u.component_mul(&e), sigma, o.opacity)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut gaussians = Vec::new();
    let mut gt = Vec::new();
    for (k, g) in per_object.into_iter().enumerate() {
        gt.extend(std::iter::repeat_n(k as i64, g.len()));
        gaussians.extend(g);
    }
    let f = &spec.floaters;
    let mut rng = entity_rng(spec.seed, TAG_FLOATER, 0);
    for _ in 0..f.count {
        let p = Vec3::from_fn(|i, _| {
            let (lo, hi) = (f.min[i], f.max[i]);
            if hi > lo {
                rng.gen_range(lo..hi)
            } else {
                lo
            }
        });
        gaussians.push(GaussianPrimitive::isotropic(p, f.scale, f.opacity)?);
        gt.push(FLOATER_ID);
    }
    Ok(SynthScene {
        scene: GaussianScene::new(gaussians),
        gt,
    })
}

pub fn view_id(index: usize) -> String {
    format!("view_{index:03}")
}

pub fn generate_cameras(spec: &SynthSpec) -> Result<Vec<CameraView>> {
    let im = &spec.image;
    let up = Vec3::new(0.0, 0.0, 1.0);
    match &spec.cameras {
        CameraPath::Orbit {
            count,
            radius,
            height,
            target,
        } => (0..*count)
            .map(|i| {
                let a = TAU * i as f64 / *count as f64;
                let t = Vec3::from(*target);
                let eye = Vec3::new(t.x + radius * a.cos(), t.y + radius * a.sin(), *height);
                CameraView::look_at(view_id(i), im.width, im.height, im.focal, eye, t, up)
            })
            .collect(),
        CameraPath::Corridor {
            count,
            start,
            end,
            look_at,
        } => (0..*count)
            .map(|i| {
                let s = if *count > 1 { i as f64 / (*count - 1) as f64 } else { 0.0 };
                let eye = Vec3::from(*start).lerp(&Vec3::from(*end), s);
                CameraView::look_at(view_id(i), im.width, im.height, im.focal, eye, Vec3::from(*look_at), up)
            })
            .collect(),
    }
}

/// Counts of noise events applied while generating masks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseStats {
    pub visible: usize,
    pub dropped: usize,
    pub flipped: usize,
    pub eroded_away: usize,
    pub spurious: usize,
}

impl NoiseStats {
    fn add(&mut self, o: &NoiseStats) {
        self.visible += o.visible;
        self.dropped += o.dropped;
        self.flipped += o.flipped;
        self.eroded_away += o.eroded_away;
        self.spurious += o.spurious;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthViews {
    pub cameras: Vec<CameraView>,
    pub masks: Vec<ViewMaskSet>,
    pub gt_masks: Vec<RelabeledMaskSet>,
    /// Boxes of the ground-truth objects under the default box rule.
    pub gt_boxes: Vec<ViewBoxes>,
    pub stats: NoiseStats,
}

/// Draws for one observed object mask, in stream order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskDraws {
    pub drop: bool,
    pub flip: bool,
    /// Index into the vocabulary minus the true label.
    pub flip_choice: usize,
    pub det_conf: f64,
    pub seg_conf: f64,
}

pub fn mask_draws(rng: &mut ChaCha8Rng, noise: &NoiseSpec, alternatives: usize) -> MaskDraws {
    let [lo, hi] = noise.confidence_range;
    let conf = |rng: &mut ChaCha8Rng| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let drop = rng.gen::<f64>() < noise.drop_rate;
    let flip = rng.gen::<f64>() < noise.label_flip_rate;
    let flip_choice = rng.gen_range(0..alternatives.max(1));
    let det_conf = conf(rng);
    let seg_conf = conf(rng);
    MaskDraws {
        drop,
        flip,
        flip_choice,
        det_conf,
        seg_conf,
    }
}

fn other_labels<'a>(vocab: &'a [String], label: &str) -> Vec<&'a String> {
    vocab.iter().filter(|v| v.as_str() != label).collect()
}

fn spurious_blob(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BinaryMask {
    let cx = rng.gen_range(0.0..w as f64);
    let cy = rng.gen_range(0.0..h as f64);
    let rx = rng.gen_range(0.05..0.15) * w as f64;
    let ry = rng.gen_range(0.05..0.15) * h as f64;
    let mut m = BinaryMask::empty(w, h);
    for y in 0..h {
        for x in 0..w {
            let dx = (x as f64 - cx) / rx;
            let dy = (y as f64 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                m.set(x, y, true);
            }
        }
    }
    m
}

/// Closing radius that turns the speckled owner map into solid regions.
const HOLE_FILL_PX: u32 = 2;

fn view_masks(
    spec: &SynthSpec,
    synth: &SynthScene,
    cam: &CameraView,
    view_index: usize,
) -> Result<(ViewMaskSet, RelabeledMaskSet, NoiseStats)> {
    let (w, h) = (cam.width, cam.height);
    let render = render_depth_with_owner(&synth.scene, cam, DEFAULT_NEAR);
    let n_obj = spec.objects.len();
    let mut regions = vec![BinaryMask::empty(w, h); n_obj];
    for (pi, owner) in render.owner.iter().enumerate() {
        if let Some(g) = owner {
            let id = synth.gt[*g as usize];
            if id >= 0 {
                regions[id as usize].set(pi as u32 % w, pi as u32 / w, true);
            }
        }
    }
    for region in regions.iter_mut() {
        *region = region.closed(HOLE_FILL_PX);
    }
    for k in 0..n_obj {
        if let Some(p) = spec.objects[k].nested_in {
            let child = regions[k].clone();
            regions[p].union_with(&child);
        }
    }

    let mut stats = NoiseStats::default();
    let mut gt_masks = Vec::new();
    let mut masks = Vec::new();
    for (k, region) in regions.iter().enumerate() {
        if region.area() < spec.min_mask_area {
            continue;
        }
        stats.visible += 1;
        let label = &spec.objects[k].label;
        gt_masks.push(RelabeledMask {
            mask_id: k as u32,
            object_id: Some(k as u32),
            label: Label::new(label),
            region: region.clone(),
        });
        let others = other_labels(&spec.vocabulary, label);
        let mut rng = entity_rng(spec.seed, TAG_MASK, mask_entity(view_index, k));
        let d = mask_draws(&mut rng, &spec.noise, others.len());
        if d.drop {
            stats.dropped += 1;
            continue;
        }
        let observed = if d.flip {
            stats.flipped += 1;
            others[d.flip_choice].as_str()
        } else {
            label.as_str()
        };
        let region = region.eroded(spec.noise.mask_erosion_px);
        if region.is_empty() {
            stats.eroded_away += 1;
            continue;
        }
        masks.push((observed.to_string(), d.det_conf, d.seg_conf, region));
    }

    let mut rng = entity_rng(spec.seed, TAG_SPURIOUS, view_index as u64);
    let [lo, hi] = spec.noise.confidence_range;
    for _ in 0..stats.visible {
        if rng.gen::<f64>() >= spec.noise.spurious_rate {
            continue;
        }
        let region = spurious_blob(&mut rng, w, h);
        let label = spec.vocabulary[rng.gen_range(0..spec.vocabulary.len())].clone();
        let det = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let seg = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        if !region.is_empty() {
            stats.spurious += 1;
            masks.push((label, det, seg, region));
        }
    }

    let instances = masks
        .into_iter()
        .enumerate()
        .map(|(i, (label, det, seg, region))| MaskInstance::new(i as u32, label, det, seg, region))
        .collect::<Result<Vec<_>>>()?;
    let set = ViewMaskSet::new(cam.view_id.clone(), w, h, instances)?;
    let gt = RelabeledMaskSet {
        view_id: cam.view_id.clone(),
        width: w,
        height: h,
        masks: gt_masks,
    };
    Ok((set, gt, stats))
}

pub fn generate_views_and_masks(spec: &SynthSpec, synth: &SynthScene) -> Result<SynthViews> {
    spec.validate()?;
    let cameras = generate_cameras(spec)?;
    let per_view = cameras
        .par_iter()
        .enumerate()
        .map(|(i, cam)| view_masks(spec, synth, cam, i))
        .collect::<Result<Vec<_>>>()?;
    let mut stats = NoiseStats::default();
    let mut masks = Vec::new();
    let mut gt_masks = Vec::new();
    for (m, g, s) in per_view {
        stats.add(&s);
        masks.push(m);
        gt_masks.push(g);
    }
    let gt_boxes = detect_boxes(&gt_codebook(spec, synth), &synth.scene, &cameras, &PipelineConfig::default());
    Ok(SynthViews {
        cameras,
        masks,
        gt_masks,
        gt_boxes,
        stats,
    })
}

/// One object per spec object holding all of its Gaussians, labeled with the true label.
pub fn gt_codebook(spec: &SynthSpec, synth: &SynthScene) -> ObjectCodebook {
    let mut objects: Vec<CodebookObject> = spec
        .objects
        .iter()
        .enumerate()
        .map(|(k, o)| CodebookObject {
            object_id: k as u32,
            gaussian_weights: Default::default(),
            label_votes: Default::default(),
            mask_refs: vec![],
            final_label: Some(Label::new(&o.label)),
            object_confidence: None,
        })
        .collect();
    for (i, &id) in synth.gt.iter().enumerate() {
        if id >= 0 {
            objects[id as usize].gaussian_weights.insert(i as u32, 1.0);
        }
    }
    ObjectCodebook::from_objects(objects).expect("ids are distinct")
}

/// Scene and views in one call.
pub fn generate(spec: &SynthSpec) -> Result<(SynthScene, SynthViews)> {
    let scene = generate_scene(spec)?;
    let views = generate_views_and_masks(spec, &scene)?;
    Ok((scene, views))
}

pub const SCENE_FILE: &str = "scene.ply";
pub const CAMERAS_FILE: &str = "cameras.json";
pub const MASKS_DIR: &str = "masks";
pub const GT_MASKS_DIR: &str = "gt_masks";
pub const GT_BOXES_DIR: &str = "gt_boxes";
pub const GT_IDS_FILE: &str = "gt_ids.json";
pub const SPEC_FILE: &str = "spec.json";

/// Write a dataset in the on-disk formats the pipeline reads.
pub fn write_dataset(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<(SynthScene, SynthViews)> {
    let dir = dir.as_ref();
    let (scene, views) = generate(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_gaussian_ply(&scene.scene, dir.join(SCENE_FILE))?;
    io::write_cameras(&views.cameras, dir.join(CAMERAS_FILE))?;
    io::write_mask_dir(&views.masks, dir.join(MASKS_DIR))?;
    io::write_relabeled_dir(&views.gt_masks, dir.join(GT_MASKS_DIR))?;
    io::write_box_dir(&views.gt_boxes, dir.join(GT_BOXES_DIR))?;
    io::write_json(&scene.gt, dir.join(GT_IDS_FILE), false)?;
    io::write_json(spec, dir.join(SPEC_FILE), true)?;
    Ok((scene, views))
}
