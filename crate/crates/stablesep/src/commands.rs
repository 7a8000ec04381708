//! The `mix`, `separate`, `bench`, `sketch` and `fit` commands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stablesep_core::clompr::clompr_fit_detailed;
use stablesep_core::pipeline::frequency_seed;
use stablesep_core::sketch::default_sketch_size;
use stablesep_core::{compute_sketch, draw_frequencies, Evaluator, MixSpec};

use crate::bench::{loglik_csv, run_bench_with, table_csv, BenchReport, TrialResult};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiment::{make_trial, mix_baseline, score, separate, Algorithm};
use crate::report::{FitReport, MixFile, SeparationReport, SketchDump};
use crate::stft::stft;
use crate::wav::{encode_wav, load_wav};

/// Files written into an output directory. Unless [`OutputDir::finish`] is
/// called, dropping it deletes them again, and the directory too if it was
/// created here.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    created: bool,
    written: Vec<PathBuf>,
    finished: bool,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        let created = !root.exists();
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            created,
            written: Vec::new(),
            finished: false,
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        self.written.push(path.clone());
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(format!("{name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(mut self) -> Vec<PathBuf> {
        self.finished = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.finished {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created {
            let _ = fs::remove_dir(&self.root);
        }
    }
}

/// A mixture with whatever ground truth is known about it.
#[derive(Debug, Clone)]
pub struct Input {
    pub mixture: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub truth: Option<Vec<Vec<Vec<f64>>>>,
    pub mix_spec: Option<MixSpec>,
}

fn load_audio(path: &Path, config: &ExperimentConfig) -> Result<Vec<Vec<f64>>> {
    let audio = load_wav(path)?;
    if audio.sample_rate != config.sample_rate {
        return Err(Error::Data(format!(
            "{}: sample rate {} differs from the configured {}",
            path.display(),
            audio.sample_rate,
            config.sample_rate
        )));
    }
    Ok(audio.samples)
}

pub fn read_mix_file(path: &Path) -> Result<MixFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Data(format!("{}: {}", path.display(), e.message())))
}

/// Loads the configured mixture and truth, or synthesizes a trial from the
/// seed when no mixture is configured.
pub fn load_input(config: &ExperimentConfig) -> Result<Input> {
    let Some(path) = &config.mixture else {
        if !config.truth.is_empty() || config.mixspec.is_some() {
            return Err(Error::Config("truth and mixspec need an input mixture".into()));
        }
        let trial = make_trial(&config.trial_spec(), config.geometry()?, config.seed)?;
        return Ok(Input {
            mixture: trial.mixture,
            sample_rate: trial.sample_rate,
            truth: Some(trial.images),
            mix_spec: Some(trial.mix_spec),
        });
    };
    let mixture = load_audio(path, config)?;
    let truth = if config.truth.is_empty() {
        None
    } else {
        let images = config.truth.iter().map(|p| load_audio(p, config)).collect::<Result<Vec<_>>>()?;
        for (p, img) in config.truth.iter().zip(&images) {
            if img.len() != mixture.len() || img.iter().any(|ch| ch.len() != mixture[0].len()) {
                return Err(Error::Data(format!("{}: shape differs from the mixture", p.display())));
            }
        }
        Some(images)
    };
    let mix_spec = config.mixspec.as_deref().map(read_mix_file).transpose()?.map(|f| f.mix);
    if let Some(ms) = &mix_spec {
        if ms.sources.len() != config.sources {
            return Err(Error::Config(format!("mixspec has {} sources, config {}", ms.sources.len(), config.sources)));
        }
    }
    Ok(Input {
        mixture,
        sample_rate: config.sample_rate,
        truth,
        mix_spec,
    })
}

fn image_name(k: usize) -> String {
    format!("image_{}.wav", k + 1)
}

/// Writes a synthetic mixture, its source images and `mixspec.toml`.
pub fn cmd_mix(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let trial = make_trial(&config.trial_spec(), config.geometry()?, config.seed)?;
    let images: Vec<String> = (0..trial.images.len()).map(image_name).collect();
    let file = MixFile {
        mix: trial.mix_spec.clone(),
        sample_rate: trial.sample_rate,
        mixture: "mixture.wav".into(),
        images: images.clone(),
        config: config.clone(),
    };
    let spec_text = toml::to_string(&file).map_err(|e| Error::Data(format!("mixspec: {e}")))?;
    let mixture = encode_wav(&trial.mixture, trial.sample_rate)?;
    let encoded = trial.images.iter().map(|img| encode_wav(img, trial.sample_rate)).collect::<Result<Vec<_>>>()?;

    let mut out = OutputDir::create(&config.output)?;
    out.write("mixture.wav", &mixture)?;
    for (name, bytes) in images.iter().zip(&encoded) {
        out.write(name, bytes)?;
    }
    out.write("mixspec.toml", spec_text.as_bytes())?;
    Ok(out.finish())
}

/// Separates the configured mixture with `config.method`.
pub fn cmd_separate(config: &ExperimentConfig) -> Result<(SeparationReport, Vec<PathBuf>)> {
    let input = load_input(config)?;
    let opts = config.separation(config.seed)?;
    let sep = separate(&input.mixture, config.method, &opts, input.truth.as_deref())?;
    let (scores, mix_scores) = match &input.truth {
        Some(truth) => {
            let evaluator = Evaluator::new(truth, config.filter_len)?;
            (
                Some(score(&sep, &evaluator, input.mix_spec.as_ref(), config.window_length)?),
                Some(mix_baseline(&input.mixture, &evaluator)?),
            )
        }
        None => (None, None),
    };
    let names: Vec<String> = (0..sep.estimates.len()).map(|k| format!("estimate_{}.wav", k + 1)).collect();
    let encoded = sep.estimates.iter().map(|e| encode_wav(e, input.sample_rate)).collect::<Result<Vec<_>>>()?;
    let report = SeparationReport {
        config: config.clone(),
        method: config.method,
        estimates: names.clone(),
        scores,
        mix_baseline: mix_scores,
        frequencies: sep.fits.unwrap_or_default(),
    };

    let mut out = OutputDir::create(&config.output)?;
    for (name, bytes) in names.iter().zip(&encoded) {
        out.write(name, bytes)?;
    }
    out.write_json("report.json", &report)?;
    Ok((report, out.finish()))
}

/// Runs the configured trials and writes `bench.json`, `table.csv` and one
/// `loglik_<method>.csv` per fitted method.
pub fn cmd_bench(config: &ExperimentConfig, progress: impl FnMut(&TrialResult)) -> Result<(BenchReport, Vec<PathBuf>)> {
    let report = run_bench_with(config, progress)?;
    let mut out = OutputDir::create(&config.output)?;
    out.write_json("bench.json", &report)?;
    out.write("table.csv", table_csv(&report.table).as_bytes())?;
    for &a in &config.methods {
        if let Some(csv) = loglik_csv(&report, a) {
            out.write(&format!("loglik_{}.csv", a.name()), csv.as_bytes())?;
        }
    }
    Ok((report, out.finish()))
}

/// Dumps the sketch of frequency bin `config.frequency` to `sketch.json`.
pub fn cmd_sketch(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let input = load_input(config)?;
    let spec = stft(&input.mixture, config.geometry()?)?;
    let f = config.frequency;
    if f >= spec.frequencies() {
        return Err(Error::Config(format!("frequency {f} is out of range (0..{})", spec.frequencies())));
    }
    let data = spec.bin(f)?;
    let j = config.sketch_size.unwrap_or_else(|| default_sketch_size(config.sources, data.channels()));
    let design = draw_frequencies(&data, j, frequency_seed(config.seed, f))?;
    let sketch = compute_sketch(&data, &design)?;
    let dump = SketchDump {
        config: config.clone(),
        frequency: f,
        design,
        sketch,
    };
    let mut out = OutputDir::create(&config.output)?;
    out.write_json("sketch.json", &dump)?;
    Ok(out.finish())
}

/// Fits `config.sources` components to the sketch in `config.sketch` and
/// writes `fit.json`.
pub fn cmd_fit(config: &ExperimentConfig) -> Result<(FitReport, Vec<PathBuf>)> {
    let path = config.sketch.as_deref().ok_or_else(|| Error::Config("fit needs a sketch file (sketch = ...)".into()))?;
    let alpha_locked = match config.method {
        Algorithm::CfGmm => true,
        Algorithm::CfAlpha => false,
        other => return Err(Error::Config(format!("fit works on sketches; method {other} does not"))),
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dump: SketchDump = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let seed = frequency_seed(config.seed, dump.frequency);
    let mut opts = config.pipeline(seed).clompr;
    opts.seed = seed;
    opts.alpha_locked = alpha_locked;
    let fit = clompr_fit_detailed(&dump.sketch, &dump.design, &opts)?;
    let report = FitReport {
        config: config.clone(),
        frequency: dump.frequency,
        method: config.method,
        theta: fit.mixture,
        weights: fit.weights,
        objective: fit.objective,
        sketch_energy: fit.sketch_energy,
    };
    let mut out = OutputDir::create(&config.output)?;
    out.write_json("fit.json", &report)?;
    Ok((report, out.finish()))
}
