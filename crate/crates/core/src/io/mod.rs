//! On-disk formats.

pub mod boxes;
pub mod cameras;
pub mod codebook;
pub mod depth;
pub mod masks;
pub mod overlay;
pub mod ply;

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use boxes::{read_box_dir, read_boxes, write_box_dir, write_boxes};
pub use cameras::{read_cameras, write_cameras, CameraRecord};
pub use codebook::{codebook_to_json, read_codebook, write_codebook};
pub use depth::{read_depth, write_depth};
pub use masks::{
    read_mask_dir, read_masks, read_relabeled, read_relabeled_dir, write_mask_dir, write_masks,
    write_relabeled, write_relabeled_dir, RleMask,
};
pub use overlay::{palette, write_box_overlay, write_mask_overlay};
pub use ply::{read_gaussian_ply, write_gaussian_ply};

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::json(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>, pretty: bool) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let res = if pretty {
        serde_json::to_writer_pretty(&mut w, value)
    } else {
        serde_json::to_writer(&mut w, value)
    };
    res.map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
