//! Synthetic sources with α-stable short-time spectra.

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stablesep_core::stable::SasSampler;
use stablesep_core::{Complex64, FrameGeometry, Spectrogram};

use crate::error::{Error, Result};
use crate::stft::{frame_count, istft};

/// How synthetic sources are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthOptions {
    pub samples: usize,
    /// Coefficient magnitudes are clipped to this many unit scales.
    pub magnitude_cap: Option<f64>,
    /// Spectral tilt and on/off activity per source, for speech-like
    /// sparsity in time and frequency.
    pub speech_like: bool,
}

/// Per-source, per-band characteristic exponents drawn uniformly in
/// `[lo, hi]`. Bands split the frequency axis into equal contiguous parts.
pub fn random_band_alphas(sources: usize, bands: usize, lo: f64, hi: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if bands == 0 || !(0.0 < lo && lo <= hi && hi <= 2.0) {
        return Err(Error::Config(format!("need at least one band and 0 < {lo} ≤ {hi} ≤ 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..sources)
        .map(|_| (0..bands).map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) }).collect())
        .collect())
}

/// Band of bin `f` when `frequencies` bins are split into `bands` parts.
fn band_of(f: usize, frequencies: usize, bands: usize) -> usize {
    (f * bands / frequencies).min(bands - 1)
}

/// Activity envelope in `{0.05, 1}` per frame: a two-state Markov chain
/// with mean run lengths of about 12 frames.
fn activity(frames: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut on = rng.random_bool(0.5);
    (0..frames)
        .map(|_| {
            if rng.random_bool(1.0 / 12.0) {
                on = !on;
            }
            if on { 1.0 } else { 0.05 }
        })
        .collect()
}

/// Draws the one-sided spectrogram of one source: iid unit-scale complex
/// SαS coefficients with exponent `alphas[band(f)]`.
pub fn synthetic_spectrogram(alphas: &[f64], geometry: FrameGeometry, frames: usize, opts: &SynthOptions, seed: u64) -> Result<Spectrogram> {
    if alphas.is_empty() {
        return Err(Error::Config("a source needs at least one band exponent".into()));
    }
    if let Some(cap) = opts.magnitude_cap {
        if !(cap > 0.0) {
            return Err(Error::Config(format!("magnitude cap {cap} must be positive")));
        }
    }
    let samplers = alphas.iter().map(|&a| SasSampler::new(a)).collect::<stablesep_core::Result<Vec<_>>>()?;
    let bins = geometry.frequencies();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let envelope = if opts.speech_like { activity(frames, &mut rng) } else { vec![1.0; frames] };
    let mut values = Vec::with_capacity(bins * frames);
    for f in 0..bins {
        let sampler = &samplers[band_of(f, bins, alphas.len())];
        let tilt = if opts.speech_like { 1.0 / (1.0 + f as f64 / 32.0) } else { 1.0 };
        for env in &envelope {
            let mut c: Complex64 = sampler.sample(&mut rng);
            if let Some(cap) = opts.magnitude_cap {
                let r = c.norm();
                if r > cap {
                    c *= cap / r;
                }
            }
            values.push(c * (tilt * env));
        }
    }
    Ok(Spectrogram::new(values, 1, frames, geometry)?)
}

/// `K` mono signals of `opts.samples` samples resynthesized from
/// [`synthetic_spectrogram`]s, one per entry of `alphas`.
pub fn gen_synthetic_sources(alphas: &[Vec<f64>], geometry: FrameGeometry, opts: &SynthOptions, seed: u64) -> Result<Vec<Vec<f64>>> {
    if opts.samples < geometry.window_length {
        return Err(Error::Config(format!(
            "{} samples is shorter than the {}-sample window",
            opts.samples, geometry.window_length
        )));
    }
    let frames = frame_count(opts.samples, &geometry);
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    alphas
        .iter()
        .map(|a| {
            let spec = synthetic_spectrogram(a, geometry, frames, opts, seeder.random())?;
            Ok(istft(&spec, opts.samples)?.remove(0))
        })
        .collect()
}
