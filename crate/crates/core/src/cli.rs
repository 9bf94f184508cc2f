//! Command-line front end. Exit codes: 0 success, 1 data error, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::codebook::relabel_masks;
use crate::config::{PipelineConfig, PostprocessMode, Stage};
use crate::depth::render_depth;
use crate::error::{Error, Result};
use crate::eval::{
    batch_f1_csv, detect_boxes, detection_metrics, gt_boxes_from_masks, mask_metrics, match_objects,
    DEFAULT_IOU_THRESHOLD,
};
use crate::io;
use crate::model::{CameraView, Warning};
use crate::pipeline::{ablate, ablation_table, run_pipeline, GroundTruth};
use crate::synth::{self, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "splat-codebook", version, about = "Multi-view consistent objects from 2D masks and a Gaussian splat scene")]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (scene, cameras, masks, ground truth).
    SynthGen {
        #[arg(long, required_unless_present = "preset")]
        spec: Option<PathBuf>,
        /// Built-in spec instead of a file: `room` or `noisy-room`.
        #[arg(long, conflicts_with = "spec")]
        preset: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump median-depth rasters for every view.
    RenderDepth {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        view: Option<String>,
        #[arg(long, default_value_t = crate::depth::DEFAULT_NEAR)]
        near: f64,
    },
    /// Build the object codebook.
    Build {
        #[command(flatten)]
        inputs: SceneInputs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Warning log (JSON lines); default `<out>.warnings.jsonl`.
        #[arg(long)]
        warnings: Option<PathBuf>,
    },
    /// Write masks carrying codebook ids, plus overlays.
    Relabel {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_overlays: bool,
    },
    /// Write per-view boxes for every codebook object, plus overlays.
    Detect {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        no_overlays: bool,
    },
    /// Score relabeled masks against ground truth.
    EvalMasks {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        /// Write per-batch F1 (batches of 10, 20 and 50 views) as CSV.
        #[arg(long)]
        batch_csv: Option<PathBuf>,
    },
    /// Score boxes against ground-truth boxes or ground-truth masks.
    EvalDetect {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, required_unless_present = "gt_masks")]
        gt: Option<PathBuf>,
        #[arg(long, conflicts_with = "gt")]
        gt_masks: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
    },
    /// Full pipeline and one run per disabled stage, scored on a dataset directory.
    Ablate {
        /// Directory laid out as written by `synth-gen`.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Stages to ablate (default: all).
        #[arg(long = "stage")]
        stages: Vec<Stage>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SceneInputs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    #[arg(long)]
    masks: PathBuf,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON config overriding the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Switch off a stage; repeatable.
    #[arg(long = "disable")]
    disable: Vec<Stage>,
    #[arg(long, value_parser = parse_mode)]
    postprocess: Option<PostprocessMode>,
}

fn parse_mode(s: &str) -> std::result::Result<PostprocessMode, String> {
    match s {
        "auto" => Ok(PostprocessMode::Auto),
        "on" => Ok(PostprocessMode::On),
        "off" => Ok(PostprocessMode::Off),
        _ => Err(format!("unknown mode '{s}', expected auto, on or off")),
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => io::read_json(p)?,
            None => PipelineConfig::default(),
        };
        for &s in &self.disable {
            cfg.set_stage(s, false);
        }
        if let Some(m) = self.postprocess {
            cfg.postprocess_mode = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct TimingLine<'a> {
    stage: &'a str,
    seconds: f64,
}

fn log_timings(timings: &[(String, f64)]) {
    let mut err = std::io::stderr().lock();
    for (stage, seconds) in timings {
        let line = serde_json::to_string(&TimingLine {
            stage,
            seconds: *seconds,
        })
        .unwrap();
        let _ = writeln!(err, "{line}");
    }
}

fn write_warnings(warnings: &[Warning], path: &Path) -> Result<()> {
    let mut text = String::new();
    for w in warnings {
        text += &serde_json::to_string(w).unwrap();
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).unwrap());
}

fn select_view(cameras: Vec<CameraView>, view: Option<&str>) -> Result<Vec<CameraView>> {
    match view {
        None => Ok(cameras),
        Some(id) => {
            let v: Vec<_> = cameras.into_iter().filter(|c| c.view_id == id).collect();
            if v.is_empty() {
                return Err(Error::Data(format!("no camera with view_id '{id}'")));
            }
            Ok(v)
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::SynthGen {
            spec,
            preset,
            seed,
            out,
        } => {
            let spec: SynthSpec = match (spec, preset.as_deref()) {
                (Some(p), _) => io::read_json(p)?,
                (None, Some("room")) => SynthSpec::room(seed),
                (None, Some("noisy-room")) => SynthSpec::noisy_room(seed),
                (None, Some(other)) => {
                    return Err(Error::Data(format!("unknown preset '{other}', expected room or noisy-room")))
                }
                (None, None) => unreachable!("clap requires --spec or --preset"),
            };
            let (scene, views) = synth::write_dataset(&spec, &out)?;
            eprintln!(
                "{} gaussians, {} views, {} masks written to {}",
                scene.scene.len(),
                views.cameras.len(),
                views.masks.iter().map(|m| m.masks.len()).sum::<usize>(),
                out.display()
            );
        }
        Command::RenderDepth {
            scene,
            cameras,
            out,
            view,
            near,
        } => {
            let scene = io::read_gaussian_ply(scene)?;
            let cameras = select_view(io::read_cameras(cameras)?, view.as_deref())?;
            create_dir(&out)?;
            for cam in &cameras {
                let depth = render_depth(&scene, cam, near);
                io::write_depth(&depth, out.join(format!("{}.depth", cam.view_id)))?;
            }
        }
        Command::Build {
            inputs,
            out,
            config,
            warnings,
        } => {
            let cfg = config.resolve()?;
            let scene = io::read_gaussian_ply(&inputs.scene)?;
            let cameras = io::read_cameras(&inputs.cameras)?;
            let masks = io::read_mask_dir(&inputs.masks)?;
            let result = run_pipeline(&scene, &cameras, &masks, &cfg)?;
            log_timings(&result.timings);
            io::write_codebook(&result.codebook, &out)?;
            let wpath = warnings.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".warnings.jsonl");
                PathBuf::from(p)
            });
            write_warnings(&result.warnings, &wpath)?;
            eprintln!(
                "{} objects, {} warnings, post-processing {}",
                result.codebook.len(),
                result.warnings.len(),
                if result.postprocessed { "on" } else { "off" }
            );
        }
        Command::Relabel {
            codebook,
            masks,
            out,
            no_overlays,
        } => {
            let codebook = io::read_codebook(codebook)?;
            let masks = io::read_mask_dir(masks)?;
            let sets = relabel_masks(&codebook, &masks);
            io::write_relabeled_dir(&sets, &out)?;
            if !no_overlays {
                for s in &sets {
                    io::write_mask_overlay(s, out.join(format!("{}.png", s.view_id)))?;
                }
            }
        }
        Command::Detect {
            codebook,
            scene,
            cameras,
            out,
            config,
            no_overlays,
        } => {
            let cfg = config.resolve()?;
            let codebook = io::read_codebook(codebook)?;
            let scene = io::read_gaussian_ply(scene)?;
            let cameras = io::read_cameras(cameras)?;
            let views = detect_boxes(&codebook, &scene, &cameras, &cfg);
            io::write_box_dir(&views, &out)?;
            if !no_overlays {
                for v in &views {
                    io::write_box_overlay(&v.view_id, v.width, v.height, &v.boxes, out.join(format!("{}.png", v.view_id)))?;
                }
            }
        }
        Command::EvalMasks {
            pred,
            gt,
            iou,
            batch_csv,
        } => {
            let pred = io::read_relabeled_dir(pred)?;
            let gt = io::read_relabeled_dir(gt)?;
            let assignment = match_objects(&pred, &gt);
            let report = mask_metrics(&pred, &gt, &assignment, iou);
            print_json(&report);
            print!("{}", report.table());
            if let Some(path) = batch_csv {
                let csv = batch_f1_csv(&pred, &gt, &assignment, &[10, 20, 50]);
                fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
            }
        }
        Command::EvalDetect {
            pred,
            gt,
            gt_masks,
            iou,
        } => {
            let pred = io::read_box_dir(pred)?;
            let gt = match (gt, gt_masks) {
                (Some(dir), _) => io::read_box_dir(dir)?,
                (None, Some(dir)) => gt_boxes_from_masks(&io::read_relabeled_dir(dir)?),
                (None, None) => unreachable!("clap requires --gt or --gt-masks"),
            };
            let report = detection_metrics(&pred, &gt, iou);
            print_json(&report);
            print!("{}", report.table());
        }
        Command::Ablate {
            data,
            config,
            stages,
            out,
        } => {
            let cfg = config.resolve()?;
            let scene = io::read_gaussian_ply(data.join(synth::SCENE_FILE))?;
            let cameras = io::read_cameras(data.join(synth::CAMERAS_FILE))?;
            let masks = io::read_mask_dir(data.join(synth::MASKS_DIR))?;
            let gt_masks = io::read_relabeled_dir(data.join(synth::GT_MASKS_DIR))?;
            let boxes_dir = data.join(synth::GT_BOXES_DIR);
            let gt = if boxes_dir.is_dir() {
                GroundTruth {
                    masks: gt_masks,
                    boxes: io::read_box_dir(boxes_dir)?,
                }
            } else {
                GroundTruth::from_masks(gt_masks)
            };
            let stages = if stages.is_empty() { Stage::ALL.to_vec() } else { stages };
            let rows = ablate(&scene, &cameras, &masks, &gt, &cfg, &stages)?;
            if let Some(p) = out {
                io::write_json(&rows, p, true)?;
            }
            print!("{}", ablation_table(&rows));
        }
    }
    Ok(())
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 2;
        }
    };
    match pool.install(|| execute(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
