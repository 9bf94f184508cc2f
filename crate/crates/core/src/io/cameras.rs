use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_json, write_json};
use crate::error::{Error, Result};
use crate::model::{unit_quaternion, CameraView, Vec3};

/// One world-to-camera pinhole record as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub view_id: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl CameraRecord {
    pub fn into_view(self) -> Result<CameraView> {
        let rotation = unit_quaternion(self.qw, self.qx, self.qy, self.qz)
            .map_err(|e| Error::Data(format!("view {}: {e}", self.view_id)))?;
        CameraView::new(
            self.view_id,
            self.width,
            self.height,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            rotation,
            Vec3::new(self.tx, self.ty, self.tz),
        )
    }

    pub fn from_view(v: &CameraView) -> Self {
        let q = v.rotation.quaternion();
        Self {
            view_id: v.view_id.clone(),
            width: v.width,
            height: v.height,
            fx: v.fx,
            fy: v.fy,
            cx: v.cx,
            cy: v.cy,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
            tx: v.translation.x,
            ty: v.translation.y,
            tz: v.translation.z,
        }
    }
}

/// Views sorted ascending by id.
pub fn cameras_from_records(records: Vec<CameraRecord>) -> Result<Vec<CameraView>> {
    let mut views = records
        .into_iter()
        .map(CameraRecord::into_view)
        .collect::<Result<Vec<_>>>()?;
    views.sort_by(|a, b| a.view_id.cmp(&b.view_id));
    if let Some(w) = views.windows(2).find(|w| w[0].view_id == w[1].view_id) {
        return Err(Error::Data(format!("duplicate view_id '{}'", w[0].view_id)));
    }
    Ok(views)
}

pub fn read_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraView>> {
    cameras_from_records(read_json(path)?)
}

pub fn write_cameras(views: &[CameraView], path: impl AsRef<Path>) -> Result<()> {
    let records: Vec<CameraRecord> = views.iter().map(CameraRecord::from_view).collect();
    write_json(&records, path, true)
}
