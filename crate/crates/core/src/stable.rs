//! Complex symmetric α-stable and circular Gaussian primitives.
//!
//! A source coefficient `s` is symmetric complex α-stable of unit scale when
//! `E[exp(i Re(conj(ω) s))] = exp(-|ω|^α)`. An observation dominated by
//! component `k` is `x = a_k s + e_k` with `e_k` circular Gaussian, so that
//!
//! ```text
//! ψ_k(ω) = exp(-|a_k* ω|^α_k - σ²_k ‖ω‖²)
//! ```
//!
//! Gaussian characteristic functions follow `E[exp(i Re(ω* x))] = exp(-¼ ω* C ω)`
//! for `x ~ N_c(0, C)`, hence at `α = 2` the component above is `N_c(0, 4(a a* + σ² I))`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::data::{dot_conj, norm_sqr, Observations};
use crate::error::{Error, Result};

/// Tolerance on `Σ π_k = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// One mixture component: steering vector, characteristic exponent,
/// residual scale and mixing weight.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComponentParams {
    pub a: Vec<Complex64>,
    pub alpha: f64,
    pub sigma2: f64,
    pub pi: f64,
}

impl ComponentParams {
    pub fn new(a: Vec<Complex64>, alpha: f64, sigma2: f64, pi: f64) -> Result<Self> {
        let c = Self { a, alpha, sigma2, pi };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::domain("sigma2", self.sigma2, "(0, inf)"));
        }
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(Error::domain("pi", self.pi, "[0, 1]"));
        }
        if self.a.is_empty() {
            return Err(Error::InvalidParams("steering vector is empty".into()));
        }
        if self.a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParams("steering vector is not finite".into()));
        }
        if norm_sqr(&self.a) <= 0.0 {
            return Err(Error::InvalidParams("steering vector has zero norm".into()));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.a.len()
    }
}

/// The per-frequency parameter set `θ = {a_k, α_k, σ²_k, π_k}`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureParams {
    components: Vec<ComponentParams>,
}

impl MixtureParams {
    pub fn new(components: Vec<ComponentParams>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParams("a mixture needs at least one component".into()))?;
        let m = first.channels();
        for c in &components {
            c.validate()?;
            if c.channels() != m {
                return Err(Error::shape("steering vector", m, c.channels()));
            }
        }
        let total: f64 = components.iter().map(|c| c.pi).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidParams(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[ComponentParams] {
        &self.components
    }

    pub fn into_components(self) -> Vec<ComponentParams> {
        self.components
    }

    /// `K`
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `M`
    pub fn channels(&self) -> usize {
        self.components[0].channels()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::domain("alpha", alpha, "(0, 2]"))
    }
}

/// `exp(-|ω|^α)`, the characteristic function of a unit-scale complex SαS
/// variable at a frequency of modulus `omega_abs`.
pub fn sas_scalar_cf(omega_abs: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(omega_abs >= 0.0 && omega_abs.is_finite()) {
        return Err(Error::domain("omega_abs", omega_abs, "[0, inf)"));
    }
    if omega_abs == 0.0 {
        return Ok(1.0);
    }
    Ok(libm::exp(-libm::pow(omega_abs, alpha)))
}

/// `|c|^α` written through `|c|²` so that `c = 0` maps to exactly zero.
#[inline]
pub(crate) fn abs_pow(abs2: f64, alpha: f64) -> f64 {
    if abs2 > 0.0 {
        libm::exp(0.5 * alpha * libm::log(abs2))
    } else {
        0.0
    }
}

/// `exp(-|a* ω|^α - σ² ‖ω‖²)`. Real-valued since the component is symmetric.
pub fn component_cf(params: &ComponentParams, omega: &[Complex64]) -> Result<f64> {
    if omega.len() != params.channels() {
        return Err(Error::shape("omega", params.channels(), omega.len()));
    }
    let proj = dot_conj(&params.a, omega).norm_sqr();
    let exponent = abs_pow(proj, params.alpha) + params.sigma2 * norm_sqr(omega);
    Ok(libm::exp(-exponent))
}

/// `Σ_k π_k ψ_k(ω)`.
pub fn mixture_cf(theta: &MixtureParams, omega: &[Complex64]) -> Result<f64> {
    theta
        .components()
        .iter()
        .map(|c| component_cf(c, omega).map(|v| c.pi * v))
        .sum()
}

/// Unit-scale complex SαS sampler.
///
/// Sub-Gaussian construction `s = √A g`: `g` is circular Gaussian with
/// `E|g|² = 4` and `A` is a totally skewed positive `(α/2)`-stable variable with
/// Laplace transform `E[exp(-λA)] = exp(-λ^{α/2})`, drawn with the
/// Chambers–Mallows–Stuck (Kanter) representation. At `α = 2`, `A ≡ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SasSampler {
    alpha: f64,
}

impl SasSampler {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Positive stable variable of index `index ∈ (0, 1)` with Laplace transform
/// `exp(-λ^index)`.
fn positive_stable<R: Rng + ?Sized>(index: f64, rng: &mut R) -> f64 {
    // U ~ Uniform(0, π) excluding the endpoints.
    let u = loop {
        let u: f64 = rng.random::<f64>() * PI;
        if u > 0.0 {
            break u;
        }
    };
    let w: f64 = Exp1.sample(rng);
    let log_a = libm::log(libm::sin(index * u)) - libm::log(libm::sin(u)) / index
        + (1.0 - index) / index * (libm::log(libm::sin((1.0 - index) * u)) - libm::log(w));
    libm::exp(log_a)
}

impl Distribution<Complex64> for SasSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        // N(0, 2) per real coordinate.
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let g = Complex64::new(re, im) * core::f64::consts::SQRT_2;
        if self.alpha == 2.0 {
            g
        } else {
            g * libm::sqrt(positive_stable(0.5 * self.alpha, rng))
        }
    }
}

/// `n` iid unit-scale complex SαS samples from a seeded stream.
pub fn sample_sas_complex(alpha: f64, n: usize, rng_seed: u64) -> Result<Vec<Complex64>> {
    let sampler = SasSampler::new(alpha)?;
    if n == 0 {
        return Err(Error::InvalidParams("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}

/// Draws `n` points from a mixture whose components have characteristic
/// function [`component_cf`]: `x = a s + e` with `s` unit SαS and `e` circular
/// Gaussian with `E|e_m|² = 4σ²`. Returns the points and their 0-based labels.
pub fn sample_mixture(theta: &MixtureParams, n: usize, rng_seed: u64) -> Result<(Observations, Vec<usize>)> {
    if n == 0 {
        return Err(Error::InvalidParams("sample count must be at least 1".into()));
    }
    let m = theta.channels();
    let samplers = theta
        .components()
        .iter()
        .map(|c| SasSampler::new(c.alpha))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut values = Vec::with_capacity(n * m);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut k = 0;
        let mut acc = theta.components()[0].pi;
        while u >= acc && k + 1 < theta.len() {
            k += 1;
            acc += theta.components()[k].pi;
        }
        let c = &theta.components()[k];
        let s = samplers[k].sample(&mut rng);
        let noise = 2.0 * libm::sqrt(c.sigma2);
        for &a in &c.a {
            values.push(a * s + standard_complex_normal(&mut rng) * noise);
        }
        labels.push(k);
    }
    Ok((Observations::new(values, m)?, labels))
}

/// Standard circular complex Gaussian, `E|z|² = 1`.
pub(crate) fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

/// Circular complex Gaussian `N_c(0, c(a a* + σ² I))` evaluated through the
/// rank-one-plus-diagonal structure of its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneGaussian {
    a: Vec<Complex64>,
    inv_diag: f64,
    shrink: f64,
    log_norm: f64,
}

impl RankOneGaussian {
    pub fn new(a: &[Complex64], sigma2: f64, cov_scale: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::domain("sigma2", sigma2, "(0, inf)"));
        }
        if !(cov_scale > 0.0 && cov_scale.is_finite()) {
            return Err(Error::domain("cov_scale", cov_scale, "(0, inf)"));
        }
        if a.is_empty() {
            return Err(Error::InvalidParams("steering vector is empty".into()));
        }
        let m = a.len() as f64;
        // C = d I + c a a*, with d = c σ².
        let diag = cov_scale * sigma2;
        let rank_one = cov_scale * norm_sqr(a);
        let log_det = (m - 1.0) * libm::log(diag) + libm::log(diag + rank_one);
        Ok(Self {
            a: a.to_vec(),
            inv_diag: 1.0 / diag,
            shrink: cov_scale / (diag + rank_one),
            log_norm: -m * libm::log(PI) - log_det,
        })
    }

    pub fn channels(&self) -> usize {
        self.a.len()
    }

    /// Log-density at `x`, given `‖x‖²` precomputed.
    #[inline]
    pub fn logpdf_with_norm(&self, x: &[Complex64], x_norm2: f64) -> f64 {
        let proj = dot_conj(&self.a, x).norm_sqr();
        self.log_norm - self.inv_diag * (x_norm2 - self.shrink * proj)
    }

    pub fn logpdf(&self, x: &[Complex64]) -> Result<f64> {
        if x.len() != self.a.len() {
            return Err(Error::shape("x", self.a.len(), x.len()));
        }
        Ok(self.logpdf_with_norm(x, norm_sqr(x)))
    }
}

/// `log N_c(x; 0, cov_scale · (a a* + σ² I))`.
pub fn gaussian_logpdf(x: &[Complex64], a: &[Complex64], sigma2: f64, cov_scale: f64) -> Result<f64> {
    RankOneGaussian::new(a, sigma2, cov_scale)?.logpdf(x)
}
