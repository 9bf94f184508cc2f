use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_json, write_json};
use crate::error::{Error, Result};
use crate::model::{CodebookObject, Label, MaskRef, ObjectCodebook};

#[derive(Debug, Serialize, Deserialize)]
struct ObjectRecord {
    object_id: u32,
    final_label: Option<Label>,
    object_confidence: Option<f64>,
    label_votes: BTreeMap<Label, f64>,
    /// Ascending; parallel to `gaussian_weights`.
    gaussian_indices: Vec<u32>,
    gaussian_weights: Vec<f64>,
    mask_refs: Vec<MaskRef>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CodebookFile {
    objects: Vec<ObjectRecord>,
}

fn to_record(o: &CodebookObject) -> ObjectRecord {
    ObjectRecord {
        object_id: o.object_id,
        final_label: o.final_label.clone(),
        object_confidence: o.object_confidence,
        label_votes: o.label_votes.clone(),
        gaussian_indices: o.gaussian_weights.keys().copied().collect(),
        gaussian_weights: o.gaussian_weights.values().copied().collect(),
        mask_refs: o.mask_refs.clone(),
    }
}

fn from_record(r: ObjectRecord) -> Result<CodebookObject> {
    if r.gaussian_indices.len() != r.gaussian_weights.len() {
        return Err(Error::Format(format!(
            "object {}: {} indices but {} weights",
            r.object_id,
            r.gaussian_indices.len(),
            r.gaussian_weights.len()
        )));
    }
    if r.gaussian_indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Format(format!(
            "object {}: gaussian_indices not strictly ascending",
            r.object_id
        )));
    }
    Ok(CodebookObject {
        object_id: r.object_id,
        gaussian_weights: r.gaussian_indices.into_iter().zip(r.gaussian_weights).collect(),
        label_votes: r.label_votes,
        mask_refs: r.mask_refs,
        final_label: r.final_label,
        object_confidence: r.object_confidence,
    })
}

pub fn codebook_to_json(codebook: &ObjectCodebook) -> String {
    let file = CodebookFile {
        objects: codebook.objects.iter().map(to_record).collect(),
    };
    serde_json::to_string(&file).expect("codebook serialization is infallible")
}

pub fn write_codebook(codebook: &ObjectCodebook, path: impl AsRef<Path>) -> Result<()> {
    let file = CodebookFile {
        objects: codebook.objects.iter().map(to_record).collect(),
    };
    write_json(&file, path, false)
}

pub fn read_codebook(path: impl AsRef<Path>) -> Result<ObjectCodebook> {
    let file: CodebookFile = read_json(path)?;
    let objects = file
        .objects
        .into_iter()
        .map(from_record)
        .collect::<Result<Vec<_>>>()?;
    ObjectCodebook::from_objects(objects)
}
