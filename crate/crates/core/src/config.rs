//! Pipeline thresholds and stage switches.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether object filtering and outlier removal run after the codebook is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostprocessMode {
    /// On when more than [`AUTO_POSTPROCESS_LABELS`] distinct labels were detected.
    #[default]
    Auto,
    On,
    Off,
}

pub const AUTO_POSTPROCESS_LABELS: usize = 10;

impl PostprocessMode {
    pub fn resolve(self, distinct_labels: usize) -> bool {
        match self {
            PostprocessMode::Auto => distinct_labels > AUTO_POSTPROCESS_LABELS,
            PostprocessMode::On => true,
            PostprocessMode::Off => false,
        }
    }
}

/// Which neighbors enter the adaptive tolerance window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborhoodRule {
    /// Skip every neighbor sharing the center's row or column.
    #[default]
    ExcludeRowAndColumn,
    /// Skip only the center pixel.
    ExcludeCenter,
}

/// A pipeline stage that can be switched off for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    DepthTest,
    SemanticConstraint,
    Filter1,
    SpatialMerge,
    Filter2,
    ObjectFilter,
    OutlierRemoval,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::DepthTest,
        Stage::SemanticConstraint,
        Stage::Filter1,
        Stage::SpatialMerge,
        Stage::Filter2,
        Stage::ObjectFilter,
        Stage::OutlierRemoval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::DepthTest => "depth-test",
            Stage::SemanticConstraint => "semantic-constraint",
            Stage::Filter1 => "filter1",
            Stage::SpatialMerge => "spatial-merge",
            Stage::Filter2 => "filter2",
            Stage::ObjectFilter => "object-filter",
            Stage::OutlierRemoval => "outlier-removal",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = Stage::ALL.iter().map(|s| s.name()).collect();
                Error::Data(format!(
                    "unknown stage '{s}', expected one of: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tau_overlap: f64,
    pub tau_filter1: f64,
    pub tau_spatial: f64,
    pub tau_filter2: f64,
    pub tau_object: f64,
    /// Upper bound on the per-pixel depth tolerance, camera units.
    pub depth_bound: f64,
    /// Tolerance window is `(2 * half_width + 1)²`.
    pub neighborhood_half_width: u32,
    pub neighborhood_rule: NeighborhoodRule,
    pub min_pts: usize,
    pub membership_cutoff: f64,
    pub near: f64,
    /// Minimum visible splats before an object gets a bounding box.
    pub min_visible: usize,
    pub postprocess_mode: PostprocessMode,
    pub enable_depth_test: bool,
    pub enable_semantic_constraint: bool,
    pub enable_filter1: bool,
    pub enable_spatial_merge: bool,
    pub enable_filter2: bool,
    pub enable_object_filter: bool,
    pub enable_outlier_removal: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau_overlap: 0.2,
            tau_filter1: 0.4,
            tau_spatial: 0.3,
            tau_filter2: 0.3,
            tau_object: 0.8,
            depth_bound: 0.5,
            neighborhood_half_width: 3,
            neighborhood_rule: NeighborhoodRule::ExcludeRowAndColumn,
            min_pts: 6,
            membership_cutoff: 0.1,
            near: 0.01,
            min_visible: 5,
            postprocess_mode: PostprocessMode::Auto,
            enable_depth_test: true,
            enable_semantic_constraint: true,
            enable_filter1: true,
            enable_spatial_merge: true,
            enable_filter2: true,
            enable_object_filter: true,
            enable_outlier_removal: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let thresholds = [
            ("tau_overlap", self.tau_overlap),
            ("tau_filter1", self.tau_filter1),
            ("tau_spatial", self.tau_spatial),
            ("tau_filter2", self.tau_filter2),
            ("tau_object", self.tau_object),
        ];
        for (name, v) in thresholds {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Data(format!("{name} = {v} out of range")));
            }
        }
        if !(self.depth_bound > 0.0) {
            return Err(Error::Data(format!("depth_bound = {} must be > 0", self.depth_bound)));
        }
        if self.min_pts < 2 {
            return Err(Error::Data("min_pts must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.membership_cutoff) {
            return Err(Error::Data("membership_cutoff outside [0, 1]".into()));
        }
        if !(self.near > 0.0) {
            return Err(Error::Data("near must be > 0".into()));
        }
        Ok(())
    }

    pub fn stage_enabled(&self, stage: Stage) -> bool {
        match stage {
            Stage::DepthTest => self.enable_depth_test,
            Stage::SemanticConstraint => self.enable_semantic_constraint,
            Stage::Filter1 => self.enable_filter1,
            Stage::SpatialMerge => self.enable_spatial_merge,
            Stage::Filter2 => self.enable_filter2,
            Stage::ObjectFilter => self.enable_object_filter,
            Stage::OutlierRemoval => self.enable_outlier_removal,
        }
    }

    pub fn set_stage(&mut self, stage: Stage, enabled: bool) {
        let flag = match stage {
            Stage::DepthTest => &mut self.enable_depth_test,
            Stage::SemanticConstraint => &mut self.enable_semantic_constraint,
            Stage::Filter1 => &mut self.enable_filter1,
            Stage::SpatialMerge => &mut self.enable_spatial_merge,
            Stage::Filter2 => &mut self.enable_filter2,
            Stage::ObjectFilter => &mut self.enable_object_filter,
            Stage::OutlierRemoval => &mut self.enable_outlier_removal,
        };
        *flag = enabled;
    }

    pub fn without(mut self, stage: Stage) -> Self {
        self.set_stage(stage, false);
        self
    }
}

/// The defaults used throughout the pipeline.
pub fn config_defaults() -> PipelineConfig {
    PipelineConfig::default()
}
