//! Audio-facing layer of the separation toolkit: STFT, WAV files, synthetic
//! sources, experiment runs, configs and reports.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod stft;
pub mod synth;
pub mod wav;

pub use error::{Error, Result};
