//! PNG overlays: masks filled or boxes stroked in a per-object color, with
//! a sidecar `*.ids.json` listing the ids and labels drawn.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::Serialize;

use super::write_json;
use crate::codebook::RelabeledMaskSet;
use crate::error::Result;
use crate::eval::BBox;

/// Color for masks that no object claimed.
pub const UNASSIGNED_COLOR: [u8; 3] = [128, 128, 128];
pub const BOX_STROKE: u32 = 2;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fixed color for an object id; channels stay in `[64, 255]`.
pub fn palette(object_id: u32) -> [u8; 3] {
    let h = splitmix64(object_id as u64);
    let c = |shift: u32| 64 + ((h >> shift) & 0xFF) as u8 % 192;
    [c(0), c(8), c(16)]
}

fn color_of(object_id: Option<u32>) -> [u8; 3] {
    object_id.map_or(UNASSIGNED_COLOR, palette)
}

#[derive(Debug, Serialize)]
struct SidecarEntry {
    object_id: Option<u32>,
    label: String,
    color: [u8; 3],
}

#[derive(Debug, Serialize)]
struct Sidecar {
    view_id: String,
    objects: Vec<SidecarEntry>,
}

/// `overlay.png` → `overlay.ids.json`.
pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("ids.json")
}

fn save(img: &RgbImage, sidecar: &Sidecar, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    write_json(sidecar, sidecar_path(path), true)
}

pub fn render_mask_overlay(set: &RelabeledMaskSet) -> RgbImage {
    let mut img = RgbImage::new(set.width, set.height);
    for m in &set.masks {
        let c = Rgb(color_of(m.object_id));
        for (x, y) in m.region.pixels() {
            img.put_pixel(x, y, c);
        }
    }
    img
}

pub fn write_mask_overlay(set: &RelabeledMaskSet, path: impl AsRef<Path>) -> Result<()> {
    let sidecar = Sidecar {
        view_id: set.view_id.clone(),
        objects: set
            .masks
            .iter()
            .map(|m| SidecarEntry {
                object_id: m.object_id,
                label: m.label.to_string(),
                color: color_of(m.object_id),
            })
            .collect(),
    };
    save(&render_mask_overlay(set), &sidecar, path.as_ref())
}

pub fn render_box_overlay(width: u32, height: u32, boxes: &[BBox]) -> RgbImage {
    let mut img = RgbImage::new(width, height);
    if width == 0 || height == 0 {
        return img;
    }
    for b in boxes {
        let c = Rgb(color_of(b.object_id));
        let clampx = |v: f64| (v.round().max(0.0) as u32).min(width - 1);
        let clampy = |v: f64| (v.round().max(0.0) as u32).min(height - 1);
        let (x0, x1, y0, y1) = (clampx(b.x_min), clampx(b.x_max), clampy(b.y_min), clampy(b.y_max));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let edge = x < x0 + BOX_STROKE
                    || x + BOX_STROKE > x1
                    || y < y0 + BOX_STROKE
                    || y + BOX_STROKE > y1;
                if edge {
                    img.put_pixel(x, y, c);
                }
            }
        }
    }
    img
}

pub fn write_box_overlay(
    view_id: &str,
    width: u32,
    height: u32,
    boxes: &[BBox],
    path: impl AsRef<Path>,
) -> Result<()> {
    let sidecar = Sidecar {
        view_id: view_id.to_string(),
        objects: boxes
            .iter()
            .map(|b| SidecarEntry {
                object_id: b.object_id,
                label: b.label.to_string(),
                color: color_of(b.object_id),
            })
            .collect(),
    };
    save(&render_box_overlay(width, height, boxes), &sidecar, path.as_ref())
}
