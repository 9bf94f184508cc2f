//! Raw depth dumps: `height`, `width` as little-endian `u32`, then row-major `f32`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::DepthImage;

pub fn depth_to_bytes(depth: &DepthImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + depth.values.len() * 4);
    out.extend_from_slice(&depth.height.to_le_bytes());
    out.extend_from_slice(&depth.width.to_le_bytes());
    for &v in &depth.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn depth_from_bytes(bytes: &[u8]) -> Result<DepthImage> {
    if bytes.len() < 8 {
        return Err(Error::Format("depth dump shorter than its header".into()));
    }
    let height = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let body = &bytes[8..];
    if body.len() != width as usize * height as usize * 4 {
        return Err(Error::Format(format!(
            "depth dump body has {} bytes, expected {height}x{width}x4",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(DepthImage {
        width,
        height,
        values,
    })
}

pub fn write_depth(depth: &DepthImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, depth_to_bytes(depth)).map_err(|e| Error::io(path, e))
}

pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthImage> {
    let path = path.as_ref();
    depth_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
