//! Write a synthetic dataset to disk, read it back through the file formats,
//! build the codebook and export relabeled masks, boxes and overlays.
//!
//! cargo run --release --example dataset_io -- [out_dir]

use std::path::PathBuf;

use splat_codebook::codebook::relabel_masks;
use splat_codebook::eval::detect_boxes;
use splat_codebook::io::{
    read_cameras, read_gaussian_ply, read_mask_dir, write_box_overlay, write_codebook, write_mask_overlay,
    write_relabeled_dir,
};
use splat_codebook::pipeline::run_pipeline;
use splat_codebook::synth::{write_dataset, SynthSpec, CAMERAS_FILE, MASKS_DIR, SCENE_FILE};
use splat_codebook::PipelineConfig;

fn main() -> splat_codebook::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("splat-codebook-demo"));
    write_dataset(&SynthSpec::room(11), &out)?;

    let scene = read_gaussian_ply(out.join(SCENE_FILE))?;
    let cameras = read_cameras(out.join(CAMERAS_FILE))?;
    let masks = read_mask_dir(out.join(MASKS_DIR))?;
    println!("read {} gaussians, {} cameras, {} mask files", scene.len(), cameras.len(), masks.len());

    let cfg = PipelineConfig::default();
    let result = run_pipeline(&scene, &cameras, &masks, &cfg)?;
    write_codebook(&result.codebook, out.join("codebook.json"))?;

    let relabeled = relabel_masks(&result.codebook, &masks);
    write_relabeled_dir(&relabeled, out.join("relabeled"))?;
    let boxes = detect_boxes(&result.codebook, &scene, &cameras, &cfg);
    if let (Some(set), Some(vb)) = (relabeled.first(), boxes.first()) {
        write_mask_overlay(set, out.join("overlay_masks.png"))?;
        write_box_overlay(&vb.view_id, vb.width, vb.height, &vb.boxes, out.join("overlay_boxes.png"))?;
    }
    println!("{} objects; outputs in {}", result.codebook.len(), out.display());
    Ok(())
}
