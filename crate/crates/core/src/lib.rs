pub mod association;
pub mod cli;
pub mod codebook;
pub mod config;
pub mod depth;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod postprocess;
pub mod synth;

pub use config::{PipelineConfig, PostprocessMode, Stage};
pub use error::{Error, Result};
