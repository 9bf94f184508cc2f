//! Domain types shared by every pipeline stage.
//!
//! Gaussians are identified by their position in [`GaussianScene::gaussians`];
//! all later stages only manipulate sets of those indices.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const QUAT_NORM_TOL: f64 = 1e-6;

/// Build a unit quaternion from raw `(w, x, y, z)` components.
///
/// Fails on a zero or non-finite quaternion; any other input is normalized.
pub fn unit_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<UnitQuaternion<f64>> {
    let q = Quaternion::new(w, x, y, z);
    let norm = q.norm();
    if !norm.is_finite() || norm < 1e-12 {
        return Err(Error::Data(format!(
            "quaternion ({w}, {x}, {y}, {z}) cannot be normalized"
        )));
    }
    Ok(UnitQuaternion::from_quaternion(q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub center: Vec3,
    /// Post-activation extents along the local axes.
    pub scale: Vec3,
    pub rotation: UnitQuaternion<f64>,
    /// Post-activation opacity.
    pub opacity: f64,
}

impl GaussianPrimitive {
    pub fn new(
        center: Vec3,
        scale: Vec3,
        rotation: UnitQuaternion<f64>,
        opacity: f64,
    ) -> Result<Self> {
        if !center.iter().all(|v| v.is_finite()) {
            return Err(Error::Data(format!("non-finite center {center:?}")));
        }
        if !scale.iter().all(|&s| s.is_finite() && s > 0.0) {
            return Err(Error::Data(format!("scale must be positive, got {scale:?}")));
        }
        if !(0.0..=1.0).contains(&opacity) {
            return Err(Error::Data(format!("opacity {opacity} outside [0, 1]")));
        }
        if (rotation.quaternion().norm() - 1.0).abs() > QUAT_NORM_TOL {
            return Err(Error::Data("rotation is not a unit quaternion".into()));
        }
        Ok(Self {
            center,
            scale,
            rotation,
            opacity,
        })
    }

    /// Isotropic, axis-aligned Gaussian.
    pub fn isotropic(center: Vec3, sigma: f64, opacity: f64) -> Result<Self> {
        Self::new(
            center,
            Vec3::repeat(sigma),
            UnitQuaternion::identity(),
            opacity,
        )
    }

    /// World-space covariance `R S Sᵀ Rᵀ`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation.to_rotation_matrix().into_inner();
        let s = Matrix3::from_diagonal(&self.scale);
        let m = r * s;
        m * m.transpose()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianScene {
    pub gaussians: Vec<GaussianPrimitive>,
}

impl GaussianScene {
    pub fn new(gaussians: Vec<GaussianPrimitive>) -> Self {
        Self { gaussians }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn center(&self, index: u32) -> Vec3 {
        self.gaussians[index as usize].center
    }
}

/// Pinhole camera with a world-to-camera pose.
///
/// Camera axes: x right, y down, z forward. Pixel centers sit at integer
/// coordinates with `(0, 0)` at the top-left.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub view_id: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl CameraView {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        view_id: impl Into<String>,
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: UnitQuaternion<f64>,
        translation: Vec3,
    ) -> Result<Self> {
        let view_id = view_id.into();
        if width == 0 || height == 0 {
            return Err(Error::Data(format!("view {view_id}: zero image size")));
        }
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Data(format!(
                "view {view_id}: focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        Ok(Self {
            view_id,
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
        })
    }

    /// Camera looking from `eye` towards `target`, with `up` roughly the world up.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        view_id: impl Into<String>,
        width: u32,
        height: u32,
        focal: f64,
        eye: Vec3,
        target: Vec3,
        up: Vec3,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        // y axis points down in image space
        let down = forward.cross(&right);
        let rows = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(rows);
        let rotation = UnitQuaternion::from_rotation_matrix(&rot);
        let translation = -(rotation * eye);
        Self::new(
            view_id,
            width,
            height,
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            rotation,
            translation,
        )
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse() * (p - self.translation)
    }

    /// Pixel coordinates of a camera-space point (no near-plane check).
    pub fn project_camera_point(&self, p: &Vec3) -> Vector2<f64> {
        Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }

    /// Camera-space point at `depth` along the ray through pixel `(x, y)`.
    pub fn unproject(&self, x: f64, y: f64, depth: f64) -> Vec3 {
        Vec3::new(
            (x - self.cx) / self.fx * depth,
            (y - self.cy) / self.fy * depth,
            depth,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Class label, compared after case folding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct Label(String);

impl Label {
    pub fn new(s: &str) -> Self {
        Label(s.to_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        Label::new(&s)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::new(s)
    }
}

impl From<Label> for String {
    fn from(l: Label) -> Self {
        l.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&self.0)
    }
}

/// Row-major binary raster.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.area())
            .finish()
    }
}

impl BinaryMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::Data(format!(
                "raster of {} pixels does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Mask with the pixels of an axis-aligned rectangle set (inclusive bounds, clipped).
    pub fn from_rect(width: u32, height: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        let mut m = Self::empty(width, height);
        for y in y0..=y1.min(height.saturating_sub(1)) {
            for x in x0..=x1.min(width.saturating_sub(1)) {
                m.set(x, y, true);
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    /// Like [`get`](Self::get) but false outside the raster.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as u64) < self.width as u64
            && (y as u64) < self.height as u64
            && self.get(x as u32, y as u32)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Coordinates of set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn iou(&self, other: &BinaryMask) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Tight inclusive pixel bounds `(x_min, y_min, x_max, y_max)`.
    pub fn bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let mut it = self.pixels();
        let (x, y) = it.next()?;
        let init = (x, y, x, y);
        Some(it.fold(init, |(x0, y0, x1, y1), (x, y)| {
            (x0.min(x), y0.min(y), x1.max(x), y1.max(y))
        }))
    }

    /// Morphological dilation with a (2r+1)² square structuring element.
    pub fn dilated(&self, r: u32) -> BinaryMask {
        if r == 0 {
            return self.clone();
        }
        let r = r as i64;
        let mut out = BinaryMask::empty(self.width, self.height);
        for (x, y) in self.pixels() {
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && nx < self.width as i64 && ny < self.height as i64 {
                        out.set(nx as u32, ny as u32, true);
                    }
                }
            }
        }
        out
    }

    /// Dilation followed by erosion: fills holes narrower than `2r + 1`.
    pub fn closed(&self, r: u32) -> BinaryMask {
        self.dilated(r).eroded(r)
    }

    /// Morphological erosion with a (2r+1)² square structuring element.
    pub fn eroded(&self, r: u32) -> BinaryMask {
        if r == 0 {
            return self.clone();
        }
        let r = r as i64;
        let mut out = BinaryMask::empty(self.width, self.height);
        for (x, y) in self.pixels() {
            let (xi, yi) = (x as i64, y as i64);
            let keep = (-r..=r).all(|dy| (-r..=r).all(|dx| self.get_signed(xi + dx, yi + dy)));
            if keep {
                out.set(x, y, true);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskInstance {
    pub mask_id: u32,
    pub label: Label,
    pub det_conf: f64,
    pub seg_conf: f64,
    /// Always `det_conf * seg_conf`.
    pub confidence: f64,
    pub region: BinaryMask,
}

impl MaskInstance {
    pub fn new(
        mask_id: u32,
        label: impl Into<Label>,
        det_conf: f64,
        seg_conf: f64,
        region: BinaryMask,
    ) -> Result<Self> {
        for (name, c) in [("det_conf", det_conf), ("seg_conf", seg_conf)] {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Data(format!(
                    "mask {mask_id}: {name} {c} outside [0, 1]"
                )));
            }
        }
        if region.is_empty() {
            return Err(Error::Data(format!("mask {mask_id}: empty region")));
        }
        Ok(Self {
            mask_id,
            label: label.into(),
            det_conf,
            seg_conf,
            confidence: det_conf * seg_conf,
            region,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewMaskSet {
    pub view_id: String,
    pub width: u32,
    pub height: u32,
    pub masks: Vec<MaskInstance>,
}

impl ViewMaskSet {
    /// Validates id uniqueness and raster sizes; masks are kept sorted by id.
    pub fn new(
        view_id: impl Into<String>,
        width: u32,
        height: u32,
        mut masks: Vec<MaskInstance>,
    ) -> Result<Self> {
        let view_id = view_id.into();
        masks.sort_by_key(|m| m.mask_id);
        for pair in masks.windows(2) {
            if pair[0].mask_id == pair[1].mask_id {
                return Err(Error::Data(format!(
                    "view {view_id}: duplicate mask_id {}",
                    pair[0].mask_id
                )));
            }
        }
        for m in &masks {
            if m.region.width() != width || m.region.height() != height {
                return Err(Error::Data(format!(
                    "view {view_id}: mask {} is {}x{}, view is {width}x{height}",
                    m.mask_id,
                    m.region.width(),
                    m.region.height()
                )));
            }
        }
        Ok(Self {
            view_id,
            width,
            height,
            masks,
        })
    }
}

/// Per-pixel median depth; uncovered pixels hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl DepthImage {
    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f64) {
        let w = self.width as usize;
        self.values[y as usize * w + x as usize] = v;
    }
}

/// Adaptive depth tolerance; zero outside the mask it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl ToleranceMap {
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }
}

/// The Gaussians selected for one 2D mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskAssociation {
    pub view_id: String,
    pub mask_id: u32,
    /// Sorted ascending, no duplicates.
    pub gaussian_indices: Vec<u32>,
    /// Mask confidence divided by the mask's mean depth.
    pub weight: f64,
    pub label: Label,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MaskKey {
    pub view_id: String,
    pub mask_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRef {
    pub view_id: String,
    pub mask_id: u32,
    pub confidence: f64,
}

impl MaskRef {
    pub fn key(&self) -> MaskKey {
        MaskKey {
            view_id: self.view_id.clone(),
            mask_id: self.mask_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookObject {
    pub object_id: u32,
    /// Accumulated weight per Gaussian; the key set is the object's Gaussian set.
    pub gaussian_weights: BTreeMap<u32, f64>,
    pub label_votes: BTreeMap<Label, f64>,
    pub mask_refs: Vec<MaskRef>,
    pub final_label: Option<Label>,
    pub object_confidence: Option<f64>,
}

impl CodebookObject {
    pub fn gaussian_indices(&self) -> impl ExactSizeIterator<Item = u32> + '_ {
        self.gaussian_weights.keys().copied()
    }

    pub fn gaussian_count(&self) -> usize {
        self.gaussian_weights.len()
    }

    pub fn contains(&self, index: u32) -> bool {
        self.gaussian_weights.contains_key(&index)
    }

    /// Label with the largest vote total; ties go to the lexicographically smallest.
    pub fn best_label(&self) -> Option<&Label> {
        // BTreeMap iterates in ascending key order, so a strict `>` keeps the
        // smallest label among equal totals.
        let mut best: Option<(&Label, f64)> = None;
        for (label, &votes) in &self.label_votes {
            match best {
                Some((_, b)) if votes <= b => {}
                _ => best = Some((label, votes)),
            }
        }
        best.map(|(l, _)| l)
    }

    /// The final label if voting has run, otherwise the current vote leader.
    pub fn label(&self) -> Option<&Label> {
        self.final_label.as_ref().or_else(|| self.best_label())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectCodebook {
    pub objects: Vec<CodebookObject>,
    pub next_id: u32,
}

impl ObjectCodebook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuild a codebook from objects, recomputing `next_id`.
    pub fn from_objects(mut objects: Vec<CodebookObject>) -> Result<Self> {
        objects.sort_by_key(|o| o.object_id);
        if let Some(pair) = objects.windows(2).find(|p| p[0].object_id == p[1].object_id) {
            return Err(Error::Data(format!(
                "duplicate object_id {}",
                pair[0].object_id
            )));
        }
        let next_id = objects.last().map_or(0, |o| o.object_id + 1);
        Ok(Self { objects, next_id })
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, object_id: u32) -> Option<&CodebookObject> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }

    pub(crate) fn allocate_id(&mut self) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }
}

/// Non-fatal condition surfaced by a pipeline stage; serialized as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_id: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub object_id: Option<u32>,
    pub message: String,
}

impl Warning {
    pub fn for_mask(stage: &str, view_id: &str, mask_id: u32, message: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            view_id: Some(view_id.into()),
            mask_id: Some(mask_id),
            object_id: None,
            message: message.into(),
        }
    }

    pub fn for_object(stage: &str, object_id: u32, message: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            view_id: None,
            mask_id: None,
            object_id: Some(object_id),
            message: message.into(),
        }
    }
}
