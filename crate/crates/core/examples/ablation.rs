//! Ablation matrix on the noisy synthetic room: the full pipeline, then each
//! stage switched off in turn.
//!
//! cargo run --release --example ablation -- [seed]

use splat_codebook::pipeline::{ablate, ablation_table, GroundTruth};
use splat_codebook::synth::{generate, SynthSpec};
use splat_codebook::{PipelineConfig, Stage};

fn main() -> splat_codebook::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let spec = SynthSpec::noisy_room(seed);
    let (synth, views) = generate(&spec)?;
    let gt = GroundTruth {
        masks: views.gt_masks.clone(),
        boxes: views.gt_boxes.clone(),
    };
    let rows = ablate(
        &synth.scene,
        &views.cameras,
        &views.masks,
        &gt,
        &PipelineConfig::default(),
        &Stage::ALL,
    )?;
    print!("{}", ablation_table(&rows));
    Ok(())
}
