//! Generate the synthetic room, build the codebook and score it.
//!
//! cargo run --release --example synthetic_pipeline -- [seed] [--noisy] [--disable <stage>]

use std::time::Instant;

use splat_codebook::pipeline::{evaluate, run_pipeline, GroundTruth};
use splat_codebook::synth::{generate, SynthSpec};
use splat_codebook::{PipelineConfig, Stage};

fn main() -> splat_codebook::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed = args.iter().find_map(|a| a.parse().ok()).unwrap_or(7);
    let noisy = args.iter().any(|a| a == "--noisy");
    let spec = if noisy { SynthSpec::noisy_room(seed) } else { SynthSpec::room(seed) };

    let t = Instant::now();
    let (synth, views) = generate(&spec)?;
    println!(
        "scene: {} gaussians, {} views, {} masks ({:?}) in {:.2}s",
        synth.scene.len(),
        views.cameras.len(),
        views.masks.iter().map(|m| m.masks.len()).sum::<usize>(),
        views.stats,
        t.elapsed().as_secs_f64()
    );

    let mut cfg = PipelineConfig::default();
    for pair in args.windows(2).filter(|w| w[0] == "--disable") {
        cfg.set_stage(pair[1].parse::<Stage>()?, false);
    }
    let out = run_pipeline(&synth.scene, &views.cameras, &views.masks, &cfg)?;
    for (stage, secs) in &out.timings {
        println!("  {stage:<20} {secs:.3}s");
    }
    println!("objects: {} (post-processed: {})", out.codebook.len(), out.postprocessed);
    for o in &out.codebook.objects {
        println!(
            "  #{:<3} {:<10} {:>6} gaussians {:>3} masks",
            o.object_id,
            o.label().map(|l| l.to_string()).unwrap_or_default(),
            o.gaussian_count(),
            o.mask_refs.len()
        );
    }

    let gt = GroundTruth {
        masks: views.gt_masks.clone(),
        boxes: views.gt_boxes.clone(),
    };
    let eval = evaluate(&out.codebook, &synth.scene, &views.cameras, &views.masks, &gt, &cfg);
    print!("{}", eval.masks.table());
    print!("{}", eval.detection.table());
    Ok(())
}
