#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod clompr;
pub mod data;
pub mod em;
pub mod metrics;
pub mod mixing;
pub mod error;
pub mod pipeline;
pub mod sketch;
pub mod spectrogram;
pub mod stable;

pub use data::Observations;
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use stable::{ComponentParams, MixtureParams};
pub use sketch::{compute_sketch, draw_frequencies, FrequencyDesign, Sketch};
pub use clompr::{clompr_fit, FitOptions};
pub use em::{em_fit, per_frequency_loglik, EmOptions};
pub use spectrogram::{FrameGeometry, Spectrogram};
pub use pipeline::{
    apply_masks, cluster, fit_all_frequencies, fit_frequency, oracle_mask, oracle_permute, FitStatus, FrequencyFit, MaskSet, Method,
    PipelineOptions,
};
pub use metrics::{mer_db, sdr_sir, Evaluator, SourceScores};
pub use mixing::{gen_mixture, MixSpec, Mixture, SourceFilter};
