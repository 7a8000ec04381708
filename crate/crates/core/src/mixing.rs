//! Anechoic stereo mixing with pure gains and integer delays.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest inter-channel gain difference, in dB.
pub const MAX_GAIN_DB: f64 = 5.0;
/// Largest delay, in samples.
pub const MAX_DELAY: usize = 20;
/// Stereo mixtures only.
pub const MIX_CHANNELS: usize = 2;

/// Gains and delays of one source on each channel.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceFilter {
    pub gains: [f64; MIX_CHANNELS],
    pub delays: [usize; MIX_CHANNELS],
}

impl SourceFilter {
    pub fn validate(&self) -> Result<()> {
        if self.gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidParams("gains must be positive and finite".into()));
        }
        let (lo, hi) = (self.gains[0].min(self.gains[1]), self.gains[0].max(self.gains[1]));
        if 20.0 * libm::log10(hi / lo) > MAX_GAIN_DB + 1e-9 {
            return Err(Error::InvalidParams(format!("gains differ by more than {MAX_GAIN_DB} dB")));
        }
        if self.delays.iter().any(|&d| d > MAX_DELAY) {
            return Err(Error::InvalidParams(format!("delays must not exceed {MAX_DELAY} samples")));
        }
        if self.delays.iter().all(|&d| d > 0) {
            return Err(Error::InvalidParams("one channel's delay must be zero".into()));
        }
        Ok(())
    }

    /// `a(f) = [g_m e^{−i 2π f d_m / N}]_m` for DFT length `N`.
    pub fn steering(&self, f: usize, dft_len: usize) -> Vec<Complex64> {
        self.gains
            .iter()
            .zip(&self.delays)
            .map(|(&g, &d)| Complex64::from_polar(g, -2.0 * PI * (f * d % dft_len) as f64 / dft_len as f64))
            .collect()
    }
}

/// Mixing filters of every source.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixSpec {
    pub sources: Vec<SourceFilter>,
    pub seed: u64,
}

impl MixSpec {
    /// Channel 1 has unit gain, channel 2 a log-uniform gain within
    /// ±5 dB; a uniform delay in `0..=20` goes to one random channel.
    pub fn random(k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParams("a mixture needs at least two sources".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sources = (0..k)
            .map(|_| {
                let db: f64 = rng.random_range(-MAX_GAIN_DB..=MAX_GAIN_DB);
                let delay = rng.random_range(0..=MAX_DELAY);
                let mut delays = [0; MIX_CHANNELS];
                delays[rng.random_range(0..MIX_CHANNELS)] = delay;
                SourceFilter {
                    gains: [1.0, libm::pow(10.0, db / 20.0)],
                    delays,
                }
            })
            .collect();
        Ok(Self { sources, seed })
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::InvalidParams("a mixture needs at least one source".into()));
        }
        self.sources.iter().try_for_each(SourceFilter::validate)
    }

    /// True steering vectors of source `k` at every one-sided bin.
    pub fn steering_vectors(&self, k: usize, dft_len: usize) -> Vec<Vec<Complex64>> {
        (0..dft_len / 2 + 1).map(|f| self.sources[k].steering(f, dft_len)).collect()
    }
}

/// Source images `y_{k,m}[n] = g_{km} s_k[n − d_{km}]` and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    /// `channels × samples`.
    pub mixture: Vec<Vec<f64>>,
    /// `K × channels × samples`.
    pub images: Vec<Vec<Vec<f64>>>,
}

/// Mixes `sources` (shorter ones zero-padded) through `spec`. The output
/// has the length of the longest source; delayed tails are cut.
pub fn gen_mixture(sources: &[Vec<f64>], spec: &MixSpec) -> Result<Mixture> {
    spec.validate()?;
    if sources.len() != spec.sources.len() {
        return Err(Error::shape("sources", spec.sources.len(), sources.len()));
    }
    let len = sources.iter().map(Vec::len).max().unwrap_or(0);
    if len == 0 {
        return Err(Error::EmptyData);
    }
    let images: Vec<Vec<Vec<f64>>> = sources
        .iter()
        .zip(&spec.sources)
        .map(|(s, filter)| {
            (0..MIX_CHANNELS)
                .map(|m| {
                    let (g, d) = (filter.gains[m], filter.delays[m]);
                    let mut y = vec![0.0; len];
                    for (n, v) in s.iter().enumerate() {
                        if n + d < len {
                            y[n + d] = g * v;
                        }
                    }
                    y
                })
                .collect()
        })
        .collect();
    let mut mixture = vec![vec![0.0; len]; MIX_CHANNELS];
    for image in &images {
        for (acc, ch) in mixture.iter_mut().zip(image) {
            acc.iter_mut().zip(ch).for_each(|(a, v)| *a += v);
        }
    }
    Ok(Mixture { mixture, images })
}
