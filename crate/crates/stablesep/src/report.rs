//! Report schemas written by the commands.

use serde::{Deserialize, Serialize};
use stablesep_core::{FrequencyDesign, FrequencyFit, MixSpec, MixtureParams, Sketch, SourceScores};

use crate::config::ExperimentConfig;
use crate::experiment::Algorithm;

/// `mixspec.toml`: how a synthetic mixture was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixFile {
    pub mix: MixSpec,
    pub sample_rate: u32,
    /// File names of the mixture and the source images, in source order.
    pub mixture: String,
    pub images: Vec<String>,
    pub config: ExperimentConfig,
}

/// `report.json` written by `separate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub config: ExperimentConfig,
    pub method: Algorithm,
    pub estimates: Vec<String>,
    /// Present when true images were given.
    pub scores: Option<Vec<SourceScores>>,
    /// The unprocessed mixture scored as every source.
    pub mix_baseline: Option<Vec<SourceScores>>,
    /// Per-frequency fits, empty for the oracle.
    pub frequencies: Vec<FrequencyFit>,
}

/// `sketch.json` written by `sketch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchDump {
    pub config: ExperimentConfig,
    pub frequency: usize,
    pub design: FrequencyDesign,
    pub sketch: Sketch,
}

/// `fit.json` written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub config: ExperimentConfig,
    pub frequency: usize,
    pub method: Algorithm,
    pub theta: MixtureParams,
    pub weights: Vec<f64>,
    pub objective: f64,
    pub sketch_energy: f64,
}
