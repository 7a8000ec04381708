//! Flat TOML experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stablesep_core::{EmOptions, FitOptions, FrameGeometry, PipelineOptions};

use crate::error::{Error, Result};
use crate::experiment::{AlphaRange, Algorithm, SeparationOptions, TrialSpec};
use crate::synth::SynthOptions;

/// Every knob of every command. Absent keys take the defaults below; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Number of sources `K`.
    pub sources: usize,
    /// Method for `separate`.
    pub method: Algorithm,
    /// Methods compared by `bench`.
    pub methods: Vec<Algorithm>,
    pub seed: u64,
    /// Trials run by `bench`, seeded `seed, seed + 1, …`.
    pub trials: usize,

    pub sample_rate: u32,
    pub window_length: usize,
    pub hop: usize,

    /// Probes per sketch; defaults to ten per real model parameter.
    pub sketch_size: Option<usize>,
    pub em_restarts: usize,
    pub em_max_iterations: usize,
    pub em_tolerance: f64,
    /// CL-OMPR outer iterations; defaults to `2K`.
    pub outer_iterations: Option<usize>,
    pub inits_per_atom: usize,
    pub max_gradient_steps: usize,
    pub fit_tolerance: f64,

    /// Shift count of the SDR/SIR projection filters.
    pub filter_len: usize,

    /// Input mixture; a synthetic one is generated from `seed` when absent.
    pub mixture: Option<PathBuf>,
    /// True source images, one stereo file per source, in order.
    pub truth: Vec<PathBuf>,
    /// Mixing filters written by `mix`, for steering-vector scores.
    pub mixspec: Option<PathBuf>,
    /// Sketch written by `sketch`, read by `fit`.
    pub sketch: Option<PathBuf>,
    /// Frequency bin for `sketch`.
    pub frequency: usize,

    /// Length of synthetic sources in seconds.
    pub duration: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_bands: usize,
    pub speech_like: bool,
    pub magnitude_cap: Option<f64>,
    /// Peak of synthetic mixtures before 16-bit quantization.
    pub peak: f64,

    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let em = EmOptions::new(3);
        let fit = FitOptions::new(3);
        Self {
            sources: 3,
            method: Algorithm::CfAlpha,
            methods: Algorithm::ALL.to_vec(),
            seed: 0,
            trials: 10,
            sample_rate: 16000,
            window_length: 1024,
            hop: 256,
            sketch_size: None,
            em_restarts: em.n_restarts,
            em_max_iterations: em.max_iterations,
            em_tolerance: em.loglik_tolerance,
            outer_iterations: None,
            inits_per_atom: fit.n_inits_per_atom,
            max_gradient_steps: fit.max_gradient_steps,
            fit_tolerance: fit.tolerance,
            filter_len: stablesep_core::metrics::DEFAULT_FILTER_LEN,
            mixture: None,
            truth: Vec::new(),
            mixspec: None,
            sketch: None,
            frequency: 0,
            duration: 10.0,
            alpha_min: 1.2,
            alpha_max: 1.6,
            alpha_bands: 4,
            speech_like: true,
            magnitude_cap: None,
            peak: 0.5,
            output: PathBuf::from("out"),
        }
    }
}

fn check(ok: bool, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(message()))
    }
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `overrides` on top and validates.
    pub fn load(path: Option<&Path>, overrides: toml::Table) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>().map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        table.extend(overrides);
        let config: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        check(self.sources >= 2, || format!("sources = {} (at least 2 are needed to separate)", self.sources))?;
        check(!self.methods.is_empty(), || "methods is empty".into())?;
        self.geometry()?;
        check(self.sketch_size != Some(0), || "sketch_size must be at least 1".into())?;
        check(self.em_restarts >= 1 && self.em_max_iterations >= 1, || "EM restarts and iterations must be at least 1".into())?;
        check(self.outer_iterations != Some(0), || "outer_iterations must be at least 1".into())?;
        check(self.inits_per_atom >= 1 && self.max_gradient_steps >= 1, || {
            "inits_per_atom and max_gradient_steps must be at least 1".into()
        })?;
        for (name, v) in [("em_tolerance", self.em_tolerance), ("fit_tolerance", self.fit_tolerance)] {
            check(v >= 0.0 && v.is_finite(), || format!("{name} = {v} must be finite and nonnegative"))?;
        }
        check(self.filter_len >= 1, || "filter_len must be at least 1".into())?;
        check(self.truth.is_empty() || self.truth.len() == self.sources, || {
            format!("{} truth files for {} sources", self.truth.len(), self.sources)
        })?;
        check(self.duration > 0.0 && self.duration.is_finite(), || format!("duration = {} must be positive", self.duration))?;
        check(self.samples() >= self.window_length, || {
            format!("duration {} s is shorter than one window", self.duration)
        })?;
        check(
            0.0 < self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max <= 2.0,
            || format!("need 0 < alpha_min ≤ alpha_max ≤ 2, got {} and {}", self.alpha_min, self.alpha_max),
        )?;
        check(self.alpha_bands >= 1, || "alpha_bands must be at least 1".into())?;
        if let Some(cap) = self.magnitude_cap {
            check(cap > 0.0, || format!("magnitude_cap = {cap} must be positive"))?;
        }
        check(self.peak > 0.0 && self.peak < 1.0, || format!("peak = {} must lie in (0, 1)", self.peak))?;
        self.pipeline(self.seed).validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn geometry(&self) -> Result<FrameGeometry> {
        FrameGeometry::new(self.sample_rate, self.window_length, self.hop).map_err(|e| Error::Config(e.to_string()))
    }

    /// Synthetic source length in samples.
    pub fn samples(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }

    pub fn pipeline(&self, seed: u64) -> PipelineOptions {
        let k = self.sources;
        let mut opts = PipelineOptions::new(k, seed);
        opts.sketch_size = self.sketch_size;
        opts.em.n_restarts = self.em_restarts;
        opts.em.max_iterations = self.em_max_iterations;
        opts.em.loglik_tolerance = self.em_tolerance;
        opts.clompr.n_outer_iterations = self.outer_iterations.unwrap_or(2 * k);
        opts.clompr.n_inits_per_atom = self.inits_per_atom;
        opts.clompr.max_gradient_steps = self.max_gradient_steps;
        opts.clompr.tolerance = self.fit_tolerance;
        opts
    }

    pub fn separation(&self, seed: u64) -> Result<SeparationOptions> {
        Ok(SeparationOptions {
            geometry: self.geometry()?,
            pipeline: self.pipeline(seed),
        })
    }

    pub fn trial_spec(&self) -> TrialSpec {
        TrialSpec {
            sources: self.sources,
            sample_rate: self.sample_rate,
            synth: SynthOptions {
                samples: self.samples(),
                magnitude_cap: self.magnitude_cap,
                speech_like: self.speech_like,
            },
            alpha: AlphaRange {
                lo: self.alpha_min,
                hi: self.alpha_max,
                bands: self.alpha_bands,
            },
            peak: self.peak,
        }
    }
}

/// Parses `key=value` into a table entry. The value is read as a TOML value
/// and falls back to a bare string.
pub fn parse_override(arg: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {arg:?} is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}
