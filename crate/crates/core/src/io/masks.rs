//! Per-view mask files with column-major uncompressed RLE regions.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_json, write_json};
use crate::codebook::{RelabeledMask, RelabeledMaskSet};
use crate::error::{Error, Result};
use crate::model::{BinaryMask, Label, MaskInstance, ViewMaskSet};

/// Uncompressed RLE; runs alternate background/foreground starting with background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    /// `[height, width]`.
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl RleMask {
    pub fn encode(mask: &BinaryMask) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..w {
            for y in 0..h {
                let v = mask.get(x, y);
                if v != current {
                    counts.push(run);
                    run = 0;
                    current = v;
                }
                run += 1;
            }
        }
        counts.push(run);
        Self {
            size: [h, w],
            counts,
        }
    }

    pub fn decode(&self) -> Result<BinaryMask> {
        let [h, w] = self.size;
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if total != h as u64 * w as u64 {
            return Err(Error::Format(format!(
                "RLE counts sum to {total}, expected {h}x{w} = {}",
                h as u64 * w as u64
            )));
        }
        let mut mask = BinaryMask::empty(w, h);
        let mut pos = 0u64;
        for (k, &c) in self.counts.iter().enumerate() {
            if k % 2 == 1 {
                for p in pos..pos + c as u64 {
                    let (x, y) = ((p / h as u64) as u32, (p % h as u64) as u32);
                    mask.set(x, y, true);
                }
            }
            pos += c as u64;
        }
        Ok(mask)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskRecord {
    mask_id: u32,
    label: Label,
    det_conf: f64,
    seg_conf: f64,
    rle: RleMask,
}

#[derive(Debug, Serialize, Deserialize)]
struct ViewMasksFile<M> {
    view_id: String,
    height: u32,
    width: u32,
    masks: Vec<M>,
}

fn check_size(view: &str, rle: &RleMask, width: u32, height: u32) -> Result<()> {
    if rle.size != [height, width] {
        return Err(Error::Format(format!(
            "view {view}: RLE size {:?} differs from view size [{height}, {width}]",
            rle.size
        )));
    }
    Ok(())
}

pub fn read_masks(path: impl AsRef<Path>) -> Result<ViewMaskSet> {
    let file: ViewMasksFile<MaskRecord> = read_json(path)?;
    let masks = file
        .masks
        .into_iter()
        .map(|m| {
            check_size(&file.view_id, &m.rle, file.width, file.height)?;
            MaskInstance::new(m.mask_id, m.label, m.det_conf, m.seg_conf, m.rle.decode()?)
        })
        .collect::<Result<Vec<_>>>()?;
    ViewMaskSet::new(file.view_id, file.width, file.height, masks)
}

pub fn write_masks(set: &ViewMaskSet, path: impl AsRef<Path>) -> Result<()> {
    let file = ViewMasksFile {
        view_id: set.view_id.clone(),
        height: set.height,
        width: set.width,
        masks: set
            .masks
            .iter()
            .map(|m| MaskRecord {
                mask_id: m.mask_id,
                label: m.label.clone(),
                det_conf: m.det_conf,
                seg_conf: m.seg_conf,
                rle: RleMask::encode(&m.region),
            })
            .collect(),
    };
    write_json(&file, path, false)
}

#[derive(Debug, Serialize, Deserialize)]
struct RelabeledRecord {
    mask_id: u32,
    object_id: Option<u32>,
    label: Label,
    rle: RleMask,
}

pub fn read_relabeled(path: impl AsRef<Path>) -> Result<RelabeledMaskSet> {
    let file: ViewMasksFile<RelabeledRecord> = read_json(path)?;
    let masks = file
        .masks
        .into_iter()
        .map(|m| {
            check_size(&file.view_id, &m.rle, file.width, file.height)?;
            Ok(RelabeledMask {
                mask_id: m.mask_id,
                object_id: m.object_id,
                label: m.label,
                region: m.rle.decode()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RelabeledMaskSet {
        view_id: file.view_id,
        width: file.width,
        height: file.height,
        masks,
    })
}

pub fn write_relabeled(set: &RelabeledMaskSet, path: impl AsRef<Path>) -> Result<()> {
    let file = ViewMasksFile {
        view_id: set.view_id.clone(),
        height: set.height,
        width: set.width,
        masks: set
            .masks
            .iter()
            .map(|m| RelabeledRecord {
                mask_id: m.mask_id,
                object_id: m.object_id,
                label: m.label.clone(),
                rle: RleMask::encode(&m.region),
            })
            .collect(),
    };
    write_json(&file, path, false)
}

/// `*.json` files of a directory except overlay sidecars, sorted by file name.
pub fn json_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| !p.to_string_lossy().ends_with(".ids.json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Every view mask file in `dir`, sorted by view id.
pub fn read_mask_dir(dir: impl AsRef<Path>) -> Result<Vec<ViewMaskSet>> {
    let mut sets = json_files(dir)?
        .iter()
        .map(read_masks)
        .collect::<Result<Vec<_>>>()?;
    sets.sort_by(|a, b| a.view_id.cmp(&b.view_id));
    Ok(sets)
}

pub fn read_relabeled_dir(dir: impl AsRef<Path>) -> Result<Vec<RelabeledMaskSet>> {
    let mut sets = json_files(dir)?
        .iter()
        .map(read_relabeled)
        .collect::<Result<Vec<_>>>()?;
    sets.sort_by(|a, b| a.view_id.cmp(&b.view_id));
    Ok(sets)
}

pub fn write_mask_dir(sets: &[ViewMaskSet], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    sets.iter()
        .try_for_each(|s| write_masks(s, dir.join(format!("{}.json", s.view_id))))
}

pub fn write_relabeled_dir(sets: &[RelabeledMaskSet], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    sets.iter()
        .try_for_each(|s| write_relabeled(s, dir.join(format!("{}.json", s.view_id))))
}
