//! EM for mixtures of rank-one-plus-isotropic complex Gaussians, with the
//! normalized-observation variant.
//!
//! Component `k` has covariance `a_k a_k* + σ²_k I` (no CF scale factor). The
//! M-step is the one-factor probabilistic PCA update on the responsibility
//! weighted covariance.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{norm_sqr, Observations};
use crate::error::{Error, Result};
use crate::stable::{ComponentParams, MixtureParams, RankOneGaussian};

/// Relative variance floor: `σ² ≥ VARIANCE_FLOOR · trace(S_k) / M`.
pub const VARIANCE_FLOOR: f64 = 1e-8;
/// A component whose total responsibility falls below this fraction of `T`
/// has collapsed.
const COLLAPSE_FRACTION: f64 = 1e-10;
/// Points per logarithm in the E-step.
const LOG_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmOptions {
    pub components: usize,
    pub n_restarts: usize,
    pub max_iterations: usize,
    /// Relative log-likelihood change that ends a run.
    pub loglik_tolerance: f64,
    pub seed: u64,
    /// Fit on `x_t / ‖x_t‖` (zero points dropped).
    pub normalize_observations: bool,
}

impl EmOptions {
    pub fn new(components: usize) -> Self {
        Self {
            components,
            n_restarts: 10,
            max_iterations: 200,
            loglik_tolerance: 1e-7,
            seed: 0,
            normalize_observations: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn normalized(mut self) -> Self {
        self.normalize_observations = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.n_restarts == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidParams("EM counts must be at least 1".into()));
        }
        if !(self.loglik_tolerance >= 0.0 && self.loglik_tolerance.is_finite()) {
            return Err(Error::domain("loglik_tolerance", self.loglik_tolerance, "[0, inf)"));
        }
        Ok(())
    }
}

/// Best EM run over all restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    /// Components with `α = 2`, covariance `a a* + σ² I`.
    pub mixture: MixtureParams,
    /// Final log-likelihood on the data the model was fitted to.
    pub loglik: f64,
    /// Log-likelihood before each M-step of the retained run, then the final value.
    pub history: Vec<f64>,
    /// Restarts that ended without collapsing.
    pub valid_restarts: usize,
}

/// `Σ_t log Σ_k π_k N_c(x_t; 0, cov_scale (a_k a_k* + σ²_k I))`, ignoring `α`.
pub fn per_frequency_loglik(data: &Observations, theta: &MixtureParams, cov_scale: f64) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let comps = densities(theta, cov_scale)?;
    check_channels(data, theta)?;
    let log_pi = log_weights(theta);
    let mut scratch = vec![0.0; theta.len()];
    Ok(data.iter().map(|x| point_loglik(x, &comps, &log_pi, &mut scratch)).sum())
}

/// Posterior component probabilities, `T × K` row-major.
pub fn responsibilities(data: &Observations, theta: &MixtureParams, cov_scale: f64) -> Result<Vec<f64>> {
    let comps = densities(theta, cov_scale)?;
    check_channels(data, theta)?;
    let log_pi = log_weights(theta);
    let k = theta.len();
    let mut gamma = vec![0.0; data.len() * k];
    for (x, row) in data.iter().zip(gamma.chunks_exact_mut(k)) {
        let total = point_loglik(x, &comps, &log_pi, row);
        for g in row.iter_mut() {
            *g = libm::exp(*g - total);
        }
    }
    Ok(gamma)
}

fn check_channels(data: &Observations, theta: &MixtureParams) -> Result<()> {
    if data.channels() != theta.channels() {
        return Err(Error::shape("channels", theta.channels(), data.channels()));
    }
    Ok(())
}

fn densities(theta: &MixtureParams, cov_scale: f64) -> Result<Vec<RankOneGaussian>> {
    theta
        .components()
        .iter()
        .map(|c| RankOneGaussian::new(&c.a, c.sigma2, cov_scale))
        .collect()
}

fn log_weights(theta: &MixtureParams) -> Vec<f64> {
    theta.components().iter().map(|c| libm::log(c.pi)).collect()
}

/// Writes the posteriors `p(k | x)` into `post` and returns `(m, s)` with
/// `log p(x) = m + log s` and `1 ≤ s ≤ K`.
fn point_posterior(x: &[Complex64], comps: &[RankOneGaussian], log_pi: &[f64], post: &mut [f64]) -> (f64, f64) {
    let n2 = norm_sqr(x);
    let mut max = f64::NEG_INFINITY;
    for ((j, comp), lp) in post.iter_mut().zip(comps).zip(log_pi) {
        *j = lp + comp.logpdf_with_norm(x, n2);
        max = max.max(*j);
    }
    if max == f64::NEG_INFINITY {
        return (max, 1.0);
    }
    let mut sum = 0.0;
    for j in post.iter_mut() {
        *j = libm::exp(*j - max);
        sum += *j;
    }
    let inv = 1.0 / sum;
    post.iter_mut().for_each(|j| *j *= inv);
    (max, sum)
}

/// Writes `log π_k + log N_k(x)` into `joint` and returns their log-sum-exp.
fn point_loglik(x: &[Complex64], comps: &[RankOneGaussian], log_pi: &[f64], joint: &mut [f64]) -> f64 {
    let n2 = norm_sqr(x);
    let mut max = f64::NEG_INFINITY;
    for ((j, comp), lp) in joint.iter_mut().zip(comps).zip(log_pi) {
        *j = lp + comp.logpdf_with_norm(x, n2);
        max = max.max(*j);
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(joint.iter().map(|j| libm::exp(j - max)).sum::<f64>())
}

/// One-factor PPCA fit of a Hermitian covariance: `(a, σ²)` with
/// `a a* + σ² I` closest in likelihood to `s`.
fn ppca_update(s: &DMatrix<Complex64>) -> (Vec<Complex64>, f64) {
    let m = s.nrows();
    let trace: f64 = (0..m).map(|i| s[(i, i)].re).sum();
    let floor = (VARIANCE_FLOOR * trace / m as f64).max(f64::MIN_POSITIVE);
    let eig = s.clone().symmetric_eigen();
    let (top, &lambda1) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty covariance");
    let sigma2 = if m > 1 {
        ((trace - lambda1) / (m - 1) as f64).max(floor)
    } else {
        floor
    };
    let amp = libm::sqrt((lambda1 - sigma2).max(floor));
    let a = eig.eigenvectors.column(top).iter().map(|v| v * amp).collect();
    (a, sigma2)
}

struct Run {
    mixture: MixtureParams,
    loglik: f64,
    history: Vec<f64>,
}

fn initial_mixture(data: &Observations, k: usize, rng: &mut ChaCha8Rng) -> Result<MixtureParams> {
    let m = data.channels();
    let trace: f64 = data.iter().map(norm_sqr).sum::<f64>() / data.len() as f64;
    let sigma2 = 0.1 * trace / m as f64;
    let picks = rand::seq::index::sample(rng, data.len(), k);
    let comps = picks
        .iter()
        .map(|t| {
            let p = data.point(t);
            let a = if norm_sqr(p) > 0.0 {
                p.to_vec()
            } else {
                let mut e = vec![Complex64::new(0.0, 0.0); m];
                e[0] = Complex64::new(libm::sqrt(trace / m as f64), 0.0);
                e
            };
            ComponentParams::new(a, 2.0, sigma2, 1.0 / k as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    normalized_mixture(comps)
}

/// Builds a mixture after renormalizing weights that drifted by rounding.
fn normalized_mixture(mut comps: Vec<ComponentParams>) -> Result<MixtureParams> {
    let total: f64 = comps.iter().map(|c| c.pi).sum();
    for c in &mut comps {
        c.pi /= total;
    }
    MixtureParams::new(comps)
}

fn single_run(data: &Observations, opts: &EmOptions, rng: &mut ChaCha8Rng) -> Result<Run> {
    let k = opts.components;
    let m = data.channels();
    let t_count = data.len() as f64;
    let mut theta = initial_mixture(data, k, rng)?;
    let mut history = Vec::with_capacity(opts.max_iterations + 1);
    let mut gamma = vec![0.0; k];
    let packed = m * (m + 1) / 2;
    let mut outer = vec![Complex64::new(0.0, 0.0); packed];
    let mut last = f64::NEG_INFINITY;

    for _ in 0..opts.max_iterations {
        // E-step, accumulating sufficient statistics on the fly.
        let comps = densities(&theta, 1.0)?;
        let log_pi = log_weights(&theta);
        let mut weight = vec![0.0; k];
        // Upper triangles of the weighted scatter matrices, packed row-major.
        let mut scatter = vec![Complex64::new(0.0, 0.0); k * packed];
        let mut loglik = 0.0;
        // Sums lie in [1, K], so their product over a batch stays finite.
        let mut product = 1.0;
        for (t, x) in data.iter().enumerate() {
            let (max, sum) = point_posterior(x, &comps, &log_pi, &mut gamma);
            loglik += max;
            product *= sum;
            if t % LOG_BATCH == LOG_BATCH - 1 {
                loglik += libm::log(product);
                product = 1.0;
            }
            let mut idx = 0;
            for i in 0..m {
                for j in i..m {
                    outer[idx] = x[i] * x[j].conj();
                    idx += 1;
                }
            }
            for ((s, w), &g) in scatter.chunks_exact_mut(packed).zip(&mut weight).zip(&gamma) {
                *w += g;
                for (s, o) in s.iter_mut().zip(&outer) {
                    *s += o * g;
                }
            }
        }
        loglik += libm::log(product);
        if !loglik.is_finite() {
            return Err(Error::Numerical("log-likelihood diverged".into()));
        }
        history.push(loglik);
        if history.len() > 1 && libm::fabs(loglik - last) <= opts.loglik_tolerance * libm::fabs(last) {
            return Ok(Run { mixture: theta, loglik, history });
        }
        last = loglik;

        // M-step.
        let mut next = Vec::with_capacity(k);
        for c in 0..k {
            if !(weight[c] > COLLAPSE_FRACTION * t_count) {
                return Err(Error::Numerical(format!("component {c} collapsed")));
            }
            let upper = &scatter[c * packed..(c + 1) * packed];
            // Row i of the packed triangle starts at i·M − i(i−1)/2.
            let at = |i: usize, j: usize| upper[i * m - i * i.saturating_sub(1) / 2 + j - i];
            let s = DMatrix::from_fn(m, m, |i, j| {
                let v = if i <= j { at(i, j) } else { at(j, i).conj() };
                v / weight[c]
            });
            let (a, sigma2) = ppca_update(&s);
            next.push(ComponentParams::new(a, 2.0, sigma2, weight[c] / t_count)?);
        }
        theta = normalized_mixture(next)?;
    }
    let loglik = per_frequency_loglik(data, &theta, 1.0)?;
    if !loglik.is_finite() {
        return Err(Error::Numerical("log-likelihood diverged".into()));
    }
    history.push(loglik);
    Ok(Run { mixture: theta, loglik, history })
}

/// Fits a `K`-component Gaussian mixture by EM with restarts and keeps the run
/// with the best final log-likelihood (earliest on ties).
pub fn em_fit(data: &Observations, opts: &EmOptions) -> Result<EmFit> {
    opts.validate()?;
    if !data.is_empty() && data.iter().all(|x| norm_sqr(x) == 0.0) {
        return Err(Error::DegenerateScale);
    }
    let normalized;
    let data = if opts.normalize_observations {
        normalized = data.normalized();
        &normalized
    } else {
        data
    };
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if data.len() < opts.components {
        return Err(Error::InvalidParams(format!(
            "{} points cannot seed {} components",
            data.len(),
            opts.components
        )));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<Run> = None;
    let mut valid = 0;
    let mut last_err = None;
    for _ in 0..opts.n_restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seeder.random());
        match single_run(data, opts, &mut rng) {
            Ok(run) => {
                valid += 1;
                if best.as_ref().is_none_or(|b| run.loglik > b.loglik) {
                    best = Some(run);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(run) => Ok(EmFit {
            mixture: run.mixture,
            loglik: run.loglik,
            history: run.history,
            valid_restarts: valid,
        }),
        None => Err(Error::Numerical(format!(
            "all {} EM restarts collapsed (last: {})",
            opts.n_restarts,
            last_err.map(|e| format!("{e}")).unwrap_or_default()
        ))),
    }
}
