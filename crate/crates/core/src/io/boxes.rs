use std::fs;
use std::path::Path;

use super::masks::json_files;
use super::{read_json, write_json};
use crate::error::{Error, Result};
use crate::eval::ViewBoxes;

pub fn read_boxes(path: impl AsRef<Path>) -> Result<ViewBoxes> {
    read_json(path)
}

pub fn write_boxes(boxes: &ViewBoxes, path: impl AsRef<Path>) -> Result<()> {
    write_json(boxes, path, true)
}

/// Every `*.json` box file in `dir`, sorted by view id.
pub fn read_box_dir(dir: impl AsRef<Path>) -> Result<Vec<ViewBoxes>> {
    let mut views = json_files(dir)?
        .iter()
        .map(read_boxes)
        .collect::<Result<Vec<_>>>()?;
    views.sort_by(|a, b| a.view_id.cmp(&b.view_id));
    Ok(views)
}

pub fn write_box_dir(views: &[ViewBoxes], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    views
        .iter()
        .try_for_each(|v| write_boxes(v, dir.join(format!("{}.json", v.view_id))))
}
