//! Synthetic trials, end-to-end separation and scoring.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stablesep_core::metrics::{mean_std, mer_frequency_db};
use stablesep_core::pipeline::{aligned_steering, collect_fits};
use stablesep_core::{
    apply_masks, cluster, fit_frequency, Complex64, gen_mixture, oracle_mask, oracle_permute, Evaluator, FrameGeometry, FrequencyFit, MaskSet,
    Method, MixSpec, PipelineOptions, SourceScores, Spectrogram,
};

use crate::error::{Error, Result};
use crate::stft::{istft, stft};
use crate::synth::{gen_synthetic_sources, random_band_alphas, SynthOptions};
use crate::wav::{quantize, FULL_SCALE};

/// A blind method, or the ideal binary mask computed from the true images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Em,
    Sawada,
    CfGmm,
    CfAlpha,
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::Em, Algorithm::Sawada, Algorithm::CfGmm, Algorithm::CfAlpha, Algorithm::Oracle];

    pub fn method(self) -> Option<Method> {
        match self {
            Algorithm::Em => Some(Method::Em),
            Algorithm::Sawada => Some(Method::Sawada),
            Algorithm::CfGmm => Some(Method::CfGmm),
            Algorithm::CfAlpha => Some(Method::CfAlpha),
            Algorithm::Oracle => None,
        }
    }

    pub fn name(self) -> &'static str {
        self.method().map_or("oracle", Method::name)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?} (expected em, sawada, cf-gmm, cf-alpha or oracle)")))
    }
}

/// Exponents of the synthetic sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaRange {
    pub lo: f64,
    pub hi: f64,
    pub bands: usize,
}

/// Recipe for one synthetic mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSpec {
    pub sources: usize,
    pub sample_rate: u32,
    pub synth: SynthOptions,
    pub alpha: AlphaRange,
    /// Peak of the mixture after scaling, before 16-bit quantization.
    pub peak: f64,
}

/// A mixture, its true source images (`K × channels × samples`) and the
/// filters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub mixture: Vec<Vec<f64>>,
    pub images: Vec<Vec<Vec<f64>>>,
    pub mix_spec: MixSpec,
    pub sample_rate: u32,
}

/// Synthesizes sources, mixes them, scales the mixture peak to `spec.peak`
/// and snaps every image to the 16-bit grid. The mixture is the sum of the
/// quantized images, so it is exact on that grid too.
pub fn make_trial(spec: &TrialSpec, geometry: FrameGeometry, seed: u64) -> Result<Trial> {
    if !(spec.peak > 0.0 && spec.peak < 1.0) {
        return Err(Error::Config(format!("peak {} must lie in (0, 1)", spec.peak)));
    }
    let mix_spec = MixSpec::random(spec.sources, seed).map_err(|e| Error::Config(e.to_string()))?;
    let alphas = random_band_alphas(spec.sources, spec.alpha.bands, spec.alpha.lo, spec.alpha.hi, seed ^ 0xA1FA)?;
    let sources = gen_synthetic_sources(&alphas, geometry, &spec.synth, seed ^ 0x5EED)?;
    let raw = gen_mixture(&sources, &mix_spec)?;
    let peak = raw.mixture.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0) {
        return Err(Error::Data("synthetic mixture is silent".into()));
    }
    let gain = spec.peak / peak;
    let images: Vec<Vec<Vec<f64>>> = raw
        .images
        .iter()
        .map(|img| img.iter().map(|ch| ch.iter().map(|v| quantize(v * gain) as f64 / FULL_SCALE).collect()).collect())
        .collect();
    let channels = images[0].len();
    let len = images[0][0].len();
    let mixture = (0..channels)
        .map(|m| (0..len).map(|n| images.iter().map(|img| img[m][n]).sum()).collect())
        .collect();
    Ok(Trial {
        mixture,
        images,
        mix_spec,
        sample_rate: spec.sample_rate,
    })
}

/// Everything a separation needs besides the mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationOptions {
    pub geometry: FrameGeometry,
    pub pipeline: PipelineOptions,
}

/// Output of one separation run.
#[derive(Debug, Clone)]
pub struct Separation {
    pub algorithm: Algorithm,
    /// `K × channels × samples`, aligned to the true sources when they were
    /// given.
    pub estimates: Vec<Vec<Vec<f64>>>,
    pub masks: MaskSet,
    pub fits: Option<Vec<FrequencyFit>>,
    pub permutations: Option<Vec<Vec<usize>>>,
    /// Whether the masked images sum to the mixture spectrogram bit-exactly.
    pub partition_exact: bool,
}

/// Fits every bin in parallel; the results do not depend on scheduling.
pub fn fit_bins(spec: &Spectrogram, method: Method, opts: &PipelineOptions) -> Result<Vec<FrequencyFit>> {
    opts.validate()?;
    let results = (0..spec.frequencies())
        .into_par_iter()
        .map(|f| fit_frequency(spec, f, method, opts))
        .collect::<stablesep_core::Result<Vec<_>>>()?;
    Ok(collect_fits(results, spec.frequencies())?)
}

fn analyze_images(images: &[Vec<Vec<f64>>], geometry: FrameGeometry) -> Result<Vec<Spectrogram>> {
    images.iter().map(|img| stft(img, geometry)).collect()
}

/// STFT, per-bin fit, clustering and masking, then resynthesis. With true
/// images the estimates are realigned per frequency by oracle permutation;
/// the oracle algorithm requires them.
pub fn separate(mixture: &[Vec<f64>], algorithm: Algorithm, opts: &SeparationOptions, truth: Option<&[Vec<Vec<f64>>]>) -> Result<Separation> {
    let k = opts.pipeline.components;
    let samples = mixture.first().map_or(0, Vec::len);
    let spec = stft(mixture, opts.geometry)?;
    let truth_specs = truth.map(|t| analyze_images(t, opts.geometry)).transpose()?;
    if let Some(t) = &truth_specs {
        if t.len() != k {
            return Err(Error::Config(format!("{} true images given for {k} sources", t.len())));
        }
    }
    let (masks, fits) = match algorithm.method() {
        None => {
            let t = truth_specs
                .as_ref()
                .ok_or_else(|| Error::Config("the oracle method needs the true source images".into()))?;
            (oracle_mask(t)?, None)
        }
        Some(method) => {
            let fits = fit_bins(&spec, method, &opts.pipeline)?;
            (cluster(&spec, &fits, k)?, Some(fits))
        }
    };
    let images = apply_masks(&spec, &masks)?;
    let partition_exact = spec.as_slice().iter().enumerate().all(|(i, x)| {
        let sum = images.iter().fold(Complex64::new(0.0, 0.0), |acc, y| acc + y.as_slice()[i]);
        sum == *x
    });
    let (aligned, permutations) = match (&truth_specs, algorithm) {
        (Some(t), a) if a != Algorithm::Oracle => {
            let (perms, aligned) = oracle_permute(&images, t)?;
            (aligned, Some(perms))
        }
        _ => (images, None),
    };
    let estimates = aligned.iter().map(|s| istft(s, samples)).collect::<Result<Vec<_>>>()?;
    Ok(Separation {
        algorithm,
        estimates,
        masks,
        fits,
        permutations,
        partition_exact,
    })
}

/// Mean MER of source `k` over bins where the fit has a matching component.
fn source_mer(fits: &[FrequencyFit], perms: &[Vec<usize>], mix_spec: &MixSpec, k: usize, dft_len: usize) -> Result<Option<f64>> {
    let estimated = aligned_steering(fits, perms, mix_spec.sources.len())?;
    let truth = mix_spec.steering_vectors(k, dft_len);
    let values = estimated[k]
        .iter()
        .zip(&truth)
        .filter_map(|(e, a)| e.as_ref().map(|e| mer_frequency_db(e, a)))
        .collect::<stablesep_core::Result<Vec<f64>>>()?;
    Ok((!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64))
}

/// SDR/SIR of every aligned estimate, with MER when steering vectors were
/// fitted and the mixing filters are known.
pub fn score(separation: &Separation, evaluator: &Evaluator, mix_spec: Option<&MixSpec>, dft_len: usize) -> Result<Vec<SourceScores>> {
    (0..evaluator.sources())
        .map(|k| {
            let (sdr_db, sir_db) = evaluator.sdr_sir(&separation.estimates[k], k)?;
            let mer_db = match (&separation.fits, &separation.permutations, mix_spec) {
                (Some(fits), Some(perms), Some(ms)) => source_mer(fits, perms, ms, k, dft_len)?,
                _ => None,
            };
            Ok(SourceScores { sdr_db, sir_db, mer_db })
        })
        .collect()
}

/// Scores of the unprocessed mixture taken as the estimate of every source.
pub fn mix_baseline(mixture: &[Vec<f64>], evaluator: &Evaluator) -> Result<Vec<SourceScores>> {
    (0..evaluator.sources())
        .map(|k| {
            let (sdr_db, sir_db) = evaluator.sdr_sir(mixture, k)?;
            Ok(SourceScores {
                sdr_db,
                sir_db,
                mer_db: None,
            })
        })
        .collect()
}

/// Mean and standard deviation of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Summary {
            mean,
            std,
            count: values.len(),
        }
    }
}
