//! Random frequency designs and empirical characteristic-function sketches.

use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{seq::index, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{norm_sqr, Observations};
use crate::error::{Error, Result};
use crate::stable::standard_complex_normal;

/// Number of points used to estimate the data scale.
pub const SCALE_SUBSAMPLE: usize = 5000;

/// Probe count heuristic: ten probes per real free parameter of a
/// `K`-component, `M`-channel model (`2M` for `a`, one each for `α`, `σ²`, `π`).
pub fn default_sketch_size(components: usize, channels: usize) -> usize {
    10 * components * (2 * channels + 3)
}

/// `J` probe frequencies `ω_j ∈ C^M`, `ω_j = (r_j / s) u_j`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrequencyDesign {
    omegas: Vec<Complex64>,
    channels: usize,
    radius_scale: f64,
    seed: u64,
}

impl FrequencyDesign {
    /// Draws `count` probes for data of scale `radius_scale`.
    pub fn from_scale(channels: usize, count: usize, radius_scale: f64, seed: u64) -> Result<Self> {
        if channels == 0 || count == 0 {
            return Err(Error::InvalidParams("a design needs J ≥ 1 probes of dimension M ≥ 1".into()));
        }
        if !(radius_scale > 0.0 && radius_scale.is_finite()) {
            return Err(Error::DegenerateScale);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut omegas = Vec::with_capacity(channels * count);
        let mut dir = Vec::with_capacity(channels);
        for _ in 0..count {
            // Uniform direction on the complex unit sphere.
            let n2 = loop {
                dir.clear();
                dir.extend((0..channels).map(|_| standard_complex_normal(&mut rng)));
                let n2 = norm_sqr(&dir);
                if n2 > 0.0 {
                    break n2;
                }
            };
            let radius: f64 = StandardNormal.sample(&mut rng);
            let scale = libm::fabs(radius) / (radius_scale * libm::sqrt(n2));
            omegas.extend(dir.iter().map(|d| d * scale));
        }
        Ok(Self {
            omegas,
            channels,
            radius_scale,
            seed,
        })
    }

    /// Rebuilds a design from explicit probes (e.g. one read back from disk).
    pub fn from_parts(omegas: Vec<Complex64>, channels: usize, radius_scale: f64, seed: u64) -> Result<Self> {
        if channels == 0 || omegas.is_empty() || omegas.len() % channels != 0 {
            return Err(Error::InvalidParams("probe buffer must hold J ≥ 1 vectors of length M".into()));
        }
        if omegas.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(Error::InvalidParams("probes must be finite".into()));
        }
        if !(radius_scale > 0.0 && radius_scale.is_finite()) {
            return Err(Error::DegenerateScale);
        }
        Ok(Self {
            omegas,
            channels,
            radius_scale,
            seed,
        })
    }

    /// `J`
    pub fn len(&self) -> usize {
        self.omegas.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn radius_scale(&self) -> f64 {
        self.radius_scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn omega(&self, j: usize) -> &[Complex64] {
        &self.omegas[j * self.channels..(j + 1) * self.channels]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[Complex64]> + '_ {
        self.omegas.chunks_exact(self.channels)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.omegas
    }
}

/// `s = sqrt(median ‖x‖² / 2M)` over a seeded subsample of at most
/// [`SCALE_SUBSAMPLE`] points. The median keeps the scale finite for
/// heavy-tailed data, where the mean energy is dominated by a few points.
pub fn data_scale(data: &Observations, seed: u64) -> Result<f64> {
    let t = data.len();
    if t == 0 {
        return Err(Error::EmptyData);
    }
    let mut energies: Vec<f64> = if t <= SCALE_SUBSAMPLE {
        data.iter().map(norm_sqr).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, t, SCALE_SUBSAMPLE).into_vec();
        picked.sort_unstable();
        picked.iter().map(|&i| norm_sqr(data.point(i))).collect()
    };
    energies.sort_unstable_by(f64::total_cmp);
    let n = energies.len();
    let median = if n % 2 == 1 {
        energies[n / 2]
    } else {
        0.5 * (energies[n / 2 - 1] + energies[n / 2])
    };
    let scale = libm::sqrt(median / (2.0 * data.channels() as f64));
    if scale > 0.0 && scale.is_finite() {
        Ok(scale)
    } else {
        Err(Error::DegenerateScale)
    }
}

/// Draws `J` probes adapted to the scale of `data`.
pub fn draw_frequencies(data: &Observations, count: usize, seed: u64) -> Result<FrequencyDesign> {
    let scale = data_scale(data, seed)?;
    // Decorrelate the probe stream from the subsample stream.
    FrequencyDesign::from_scale(data.channels(), count, scale, seed ^ 0x9E37_79B9_7F4A_7C15)
}

/// Empirical characteristic function `y_j = (1/T) Σ_t exp(i Re(ω_j* x_t))`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Sketch {
    y: Vec<Complex64>,
    count: usize,
}

impl Sketch {
    pub fn new(y: Vec<Complex64>, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::EmptyData);
        }
        if y.is_empty() {
            return Err(Error::InvalidParams("sketch has no entries".into()));
        }
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParams("sketch entries must be finite".into()));
        }
        Ok(Self { y, count })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.y
    }

    /// Number of points summarized.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Sketch of the union of both datasets (count-weighted average).
    pub fn merge(&self, other: &Sketch) -> Result<Sketch> {
        if self.y.len() != other.y.len() {
            return Err(Error::shape("sketch", self.y.len(), other.y.len()));
        }
        let total = self.count + other.count;
        let (wa, wb) = (self.count as f64 / total as f64, other.count as f64 / total as f64);
        let y = self.y.iter().zip(&other.y).map(|(a, b)| a * wa + b * wb).collect();
        Ok(Sketch { y, count: total })
    }
}

/// One pass over `data`, accumulating `cos` and `sin` sums per probe.
pub fn compute_sketch(data: &Observations, design: &FrequencyDesign) -> Result<Sketch> {
    if data.channels() != design.channels() {
        return Err(Error::shape("channels", design.channels(), data.channels()));
    }
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut acc = alloc::vec![(0.0f64, 0.0f64); design.len()];
    for x in data.iter() {
        for (slot, w) in acc.iter_mut().zip(design.iter()) {
            // Re(ω* x) = Σ Re(ω_m) Re(x_m) + Im(ω_m) Im(x_m)
            let phase: f64 = w.iter().zip(x).map(|(w, x)| w.re * x.re + w.im * x.im).sum();
            let (s, c) = libm::sincos(phase);
            slot.0 += c;
            slot.1 += s;
        }
    }
    let inv = 1.0 / data.len() as f64;
    let y = acc.into_iter().map(|(c, s)| Complex64::new(c * inv, s * inv)).collect();
    Sketch::new(y, data.len())
}
