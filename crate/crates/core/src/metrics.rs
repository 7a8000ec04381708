//! Separation quality: SDR and SIR from least-squares projections onto
//! time-shifted true images, and MER on steering vectors.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Reported values are clamped to `±DB_CAP`.
pub const DB_CAP: f64 = 100.0;

/// Default number of time shifts spanning the projection subspaces.
pub const DEFAULT_FILTER_LEN: usize = 32;

const RIDGE: f64 = 1e-10;

/// Scores of one estimated source.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceScores {
    pub sdr_db: f64,
    pub sir_db: f64,
    pub mer_db: Option<f64>,
}

/// `10 log10(num / den)` clamped to `±DB_CAP`; a zero numerator gives the
/// lower cap, a zero denominator the upper one.
pub fn ratio_db(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        return -DB_CAP;
    }
    if den <= 0.0 {
        return DB_CAP;
    }
    (10.0 * libm::log10(num / den)).clamp(-DB_CAP, DB_CAP)
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

/// `Σ_n p[n] q[n + d]` for `d = lag`, with zeros outside both signals.
fn xcorr(p: &[f64], q: &[f64], lag: isize) -> f64 {
    let n = p.len().min(q.len()) as isize;
    if lag.abs() >= n {
        return 0.0;
    }
    if lag >= 0 {
        let l = lag as usize;
        p[..p.len() - l].iter().zip(&q[l..]).map(|(a, b)| a * b).sum()
    } else {
        let l = (-lag) as usize;
        p[l..].iter().zip(&q[..q.len() - l]).map(|(a, b)| a * b).sum()
    }
}

/// `bᵀ G⁻¹ b` by Cholesky, retried with a small ridge when `G` is singular.
/// A zero Gram matrix spans nothing and projects to zero.
fn projected_energy(gram: &DMatrix<f64>, rhs: &[DVector<f64>]) -> Vec<f64> {
    let chol = gram.clone().cholesky().or_else(|| {
        let trace = gram.trace();
        if trace <= 0.0 {
            return None;
        }
        let n = gram.nrows();
        (gram + DMatrix::identity(n, n) * (RIDGE * trace)).cholesky()
    });
    match chol {
        Some(c) => rhs.iter().map(|b| b.dot(&c.solve(b)).max(0.0)).collect(),
        None => vec![0.0; rhs.len()],
    }
}

/// Projection machinery for one set of true images, reusable across
/// estimates. Images are `channels × samples`, all of the same shape.
#[derive(Debug, Clone)]
pub struct Evaluator {
    truths: Vec<Vec<Vec<f64>>>,
    channels: usize,
    samples: usize,
    filter_len: usize,
    gram: DMatrix<f64>,
}

impl Evaluator {
    pub fn new(truths: &[Vec<Vec<f64>>], filter_len: usize) -> Result<Self> {
        if filter_len == 0 {
            return Err(Error::InvalidParams("filter length must be at least 1".into()));
        }
        let first = truths.first().ok_or(Error::EmptyData)?;
        let channels = first.len();
        if channels == 0 {
            return Err(Error::EmptyData);
        }
        let samples = first[0].len();
        for truth in truths {
            if truth.len() != channels {
                return Err(Error::shape("true image channels", channels, truth.len()));
            }
            for ch in truth {
                if ch.len() != samples {
                    return Err(Error::shape("true image samples", samples, ch.len()));
                }
            }
        }
        let signals: Vec<&[f64]> = truths.iter().flat_map(|t| t.iter().map(Vec::as_slice)).collect();
        let l = filter_len;
        let size = signals.len() * l;
        let mut gram = DMatrix::zeros(size, size);
        for (p, sp) in signals.iter().enumerate() {
            for (q, sq) in signals.iter().enumerate().skip(p) {
                // Entry (p, τ1; q, τ2) = Σ_n s_p[n] s_q[n + τ1 − τ2].
                for d in -(l as isize - 1)..(l as isize) {
                    let c = xcorr(sp, sq, d);
                    for t1 in 0..l {
                        let t2 = t1 as isize - d;
                        if t2 < 0 || t2 >= l as isize {
                            continue;
                        }
                        let (i, j) = (p * l + t1, q * l + t2 as usize);
                        gram[(i, j)] = c;
                        gram[(j, i)] = c;
                    }
                }
            }
        }
        Ok(Self {
            truths: truths.to_vec(),
            channels,
            samples,
            filter_len,
            gram,
        })
    }

    pub fn sources(&self) -> usize {
        self.truths.len()
    }

    /// SDR and SIR in dB of `estimate` against source `target`.
    pub fn sdr_sir(&self, estimate: &[Vec<f64>], target: usize) -> Result<(f64, f64)> {
        if target >= self.sources() {
            return Err(Error::shape("target source", self.sources(), target));
        }
        if estimate.len() != self.channels {
            return Err(Error::shape("estimate channels", self.channels, estimate.len()));
        }
        let l = self.filter_len;
        let per_source = self.channels * l;
        let size = self.sources() * per_source;
        let mut all_rhs = Vec::with_capacity(self.channels);
        let mut energy = 0.0;
        for e in estimate {
            if e.len() != self.samples {
                return Err(Error::shape("estimate samples", self.samples, e.len()));
            }
            energy += e.iter().map(|v| v * v).sum::<f64>();
            let mut b = DVector::zeros(size);
            for (p, s) in self.truths.iter().flatten().enumerate() {
                for tau in 0..l {
                    b[p * l + tau] = xcorr(s, e, tau as isize);
                }
            }
            all_rhs.push(b);
        }
        let target_rhs: Vec<DVector<f64>> = all_rhs.iter().map(|b| b.rows(target * per_source, per_source).into_owned()).collect();
        let block = self
            .gram
            .view((target * per_source, target * per_source), (per_source, per_source))
            .into_owned();
        let target_energy: f64 = projected_energy(&block, &target_rhs).iter().sum();
        let all_energy: f64 = projected_energy(&self.gram, &all_rhs).iter().sum();
        let distortion = (energy - target_energy).max(0.0);
        let interference = (all_energy - target_energy).clamp(0.0, distortion);
        Ok((ratio_db(target_energy, distortion), ratio_db(target_energy, interference)))
    }
}

/// SDR and SIR in dB of `estimate` against `truths[target]`, with
/// `filter_len` time shifts per true channel.
pub fn sdr_sir(estimate: &[Vec<f64>], truths: &[Vec<Vec<f64>>], target: usize, filter_len: usize) -> Result<(f64, f64)> {
    Evaluator::new(truths, filter_len)?.sdr_sir(estimate, target)
}

/// `10 log10(‖P_a â‖² / ‖(I − P_a) â‖²)` for one frequency.
pub fn mer_frequency_db(estimate: &[Complex64], truth: &[Complex64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::shape("steering vector", truth.len(), estimate.len()));
    }
    let na: f64 = truth.iter().map(Complex64::norm_sqr).sum();
    let ne: f64 = estimate.iter().map(Complex64::norm_sqr).sum();
    if !(na > 0.0) || !(ne > 0.0) || !na.is_finite() || !ne.is_finite() {
        return Err(Error::InvalidParams("steering vectors must be nonzero and finite".into()));
    }
    let c = truth.iter().zip(estimate).map(|(a, e)| a.conj() * e).sum::<Complex64>() / na;
    let along = c.norm_sqr() * na;
    let across: f64 = truth.iter().zip(estimate).map(|(a, e)| (e - a * c).norm_sqr()).sum();
    Ok(ratio_db(along, across))
}

/// Mean of [`mer_frequency_db`] over frequencies.
pub fn mer_db(estimates: &[Vec<Complex64>], truths: &[Vec<Complex64>]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::shape("frequencies", truths.len(), estimates.len()));
    }
    if truths.is_empty() {
        return Err(Error::EmptyData);
    }
    let values = estimates
        .iter()
        .zip(truths)
        .map(|(e, a)| mer_frequency_db(e, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
