//! Seeded multi-trial comparison of methods on synthetic mixtures.

use serde::{Deserialize, Serialize};
use stablesep_core::{Evaluator, SourceScores};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiment::{make_trial, mix_baseline, score, separate, Algorithm, Summary};

/// One method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTrial {
    pub algorithm: Algorithm,
    pub scores: Vec<SourceScores>,
    /// Per-frequency Gaussian log-likelihood of the fitted parameters.
    pub loglik: Option<Vec<f64>>,
    pub partition_exact: bool,
}

impl MethodTrial {
    pub fn mean_sdr(&self) -> f64 {
        mean(self.scores.iter().map(|s| s.sdr_db))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub seed: u64,
    pub mix: Vec<SourceScores>,
    pub methods: Vec<MethodTrial>,
}

impl TrialResult {
    pub fn mix_sdr(&self) -> f64 {
        mean(self.mix.iter().map(|s| s.sdr_db))
    }

    pub fn method(&self, algorithm: Algorithm) -> Option<&MethodTrial> {
        self.methods.iter().find(|m| m.algorithm == algorithm)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// One row of the aggregate table, over all trials and sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub name: String,
    pub sdr: Summary,
    pub sir: Summary,
    pub mer: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub table: Vec<BenchRow>,
}

/// Seed of trial `index`.
pub fn trial_seed(config: &ExperimentConfig, index: usize) -> u64 {
    config.seed.wrapping_add(index as u64)
}

/// Generates trial `index` and runs every configured method on it.
pub fn run_trial(config: &ExperimentConfig, index: usize) -> Result<TrialResult> {
    let seed = trial_seed(config, index);
    let opts = config.separation(seed)?;
    let trial = make_trial(&config.trial_spec(), opts.geometry, seed)?;
    let evaluator = Evaluator::new(&trial.images, config.filter_len)?;
    let mix = mix_baseline(&trial.mixture, &evaluator)?;
    let methods = config
        .methods
        .iter()
        .map(|&algorithm| {
            let sep = separate(&trial.mixture, algorithm, &opts, Some(&trial.images))?;
            let scores = score(&sep, &evaluator, Some(&trial.mix_spec), config.window_length)?;
            Ok(MethodTrial {
                algorithm,
                scores,
                loglik: sep.fits.as_ref().map(|fits| fits.iter().map(|f| f.loglik).collect()),
                partition_exact: sep.partition_exact,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialResult { index, seed, mix, methods })
}

fn row(name: &str, scores: Vec<&SourceScores>) -> BenchRow {
    let pick = |f: fn(&SourceScores) -> f64| Summary::of(&scores.iter().map(|s| f(s)).collect::<Vec<_>>());
    let mer: Vec<f64> = scores.iter().filter_map(|s| s.mer_db).collect();
    BenchRow {
        name: name.to_string(),
        sdr: pick(|s| s.sdr_db),
        sir: pick(|s| s.sir_db),
        mer: (!mer.is_empty()).then(|| Summary::of(&mer)),
    }
}

/// The mix baseline first, then each method in configuration order.
pub fn summarize(config: &ExperimentConfig, trials: &[TrialResult]) -> Vec<BenchRow> {
    let mut rows = vec![row("mix", trials.iter().flat_map(|t| &t.mix).collect())];
    for &algorithm in &config.methods {
        let scores = trials.iter().filter_map(|t| t.method(algorithm)).flat_map(|m| &m.scores).collect();
        rows.push(row(algorithm.name(), scores));
    }
    rows
}

pub fn run_bench(config: &ExperimentConfig) -> Result<BenchReport> {
    run_bench_with(config, |_| {})
}

/// [`run_bench`] with a callback after each finished trial.
pub fn run_bench_with(config: &ExperimentConfig, mut progress: impl FnMut(&TrialResult)) -> Result<BenchReport> {
    if config.trials == 0 {
        return Err(Error::Config("bench needs at least one trial".into()));
    }
    let trials = (0..config.trials)
        .map(|i| {
            let t = run_trial(config, i)?;
            progress(&t);
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        table: summarize(config, &trials),
        config: config.clone(),
        trials,
    })
}

fn cell(s: &Option<Summary>) -> (String, String) {
    match s {
        Some(s) => (format!("{:.4}", s.mean), format!("{:.4}", s.std)),
        None => (String::new(), String::new()),
    }
}

/// `method,sdr_mean,sdr_std,sir_mean,sir_std,mer_mean,mer_std,count`.
pub fn table_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("method,sdr_mean,sdr_std,sir_mean,sir_std,mer_mean,mer_std,count\n");
    for r in rows {
        let (mer_mean, mer_std) = cell(&r.mer);
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4},{},{},{}\n",
            r.name, r.sdr.mean, r.sdr.std, r.sir.mean, r.sir.std, mer_mean, mer_std, r.sdr.count
        ));
    }
    out
}

/// Aligned `mean ± std` table for terminals.
pub fn table_text(rows: &[BenchRow]) -> String {
    let pm = |s: &Summary| format!("{:.2} ± {:.2}", s.mean, s.std);
    let mut out = format!("{:<10} {:>16} {:>16} {:>16}\n", "method", "SDR (dB)", "SIR (dB)", "MER (dB)");
    for r in rows {
        let mer = r.mer.as_ref().map_or_else(|| "-".to_string(), pm);
        out.push_str(&format!("{:<10} {:>16} {:>16} {:>16}\n", r.name, pm(&r.sdr), pm(&r.sir), mer));
    }
    out
}

/// Per-frequency log-likelihoods of one method: one row per bin, one column
/// per trial. `None` for methods without fitted parameters.
pub fn loglik_csv(report: &BenchReport, algorithm: Algorithm) -> Option<String> {
    let columns: Vec<&Vec<f64>> = report
        .trials
        .iter()
        .map(|t| t.method(algorithm).and_then(|m| m.loglik.as_ref()))
        .collect::<Option<_>>()?;
    let bins = columns.first()?.len();
    let mut out = String::from("frequency");
    for t in &report.trials {
        out.push_str(&format!(",trial_{}", t.index));
    }
    out.push('\n');
    for f in 0..bins {
        out.push_str(&f.to_string());
        for c in &columns {
            out.push_str(&format!(",{:.6}", c[f]));
        }
        out.push('\n');
    }
    Some(out)
}
