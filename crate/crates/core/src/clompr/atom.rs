//! Atoms of the continuous dictionary: one component characteristic function
//! sampled over a frequency design, and its analytic gradient.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::data::{dot_conj, norm_sqr};
use crate::error::{Error, Result};
use crate::sketch::FrequencyDesign;

pub const ALPHA_MIN: f64 = 0.2;
pub const ALPHA_MAX: f64 = 2.0;

/// Parameters of one atom. `σ² = exp(log_sigma2)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AtomParams {
    pub a: Vec<Complex64>,
    pub alpha: f64,
    pub log_sigma2: f64,
    /// Gaussian-constrained atom: `α ≡ 2`.
    pub alpha_locked: bool,
}

impl AtomParams {
    pub fn new(a: Vec<Complex64>, alpha: f64, log_sigma2: f64, alpha_locked: bool) -> Result<Self> {
        let atom = Self {
            a,
            alpha,
            log_sigma2,
            alpha_locked,
        };
        atom.validate()?;
        Ok(atom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParams("atom steering vector must be non-empty and finite".into()));
        }
        if !(ALPHA_MIN..=ALPHA_MAX).contains(&self.alpha) {
            return Err(Error::domain("alpha", self.alpha, "[0.2, 2]"));
        }
        if self.alpha_locked && self.alpha != 2.0 {
            return Err(Error::domain("alpha", self.alpha, "{2} for a locked atom"));
        }
        if !self.log_sigma2.is_finite() {
            return Err(Error::domain("log_sigma2", self.log_sigma2, "finite reals"));
        }
        Ok(())
    }

    pub fn sigma2(&self) -> f64 {
        libm::exp(self.log_sigma2)
    }
}

/// Gradient of `Σ_j w_j ψ_j` over `(Re a, Im a, α, log σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomGradient {
    pub a_re: Vec<f64>,
    pub a_im: Vec<f64>,
    pub alpha: f64,
    pub log_sigma2: f64,
}

impl AtomGradient {
    pub(crate) fn zeros(m: usize) -> Self {
        Self {
            a_re: vec![0.0; m],
            a_im: vec![0.0; m],
            alpha: 0.0,
            log_sigma2: 0.0,
        }
    }
}

/// Probe frequencies together with their squared norms, optionally rescaled.
#[derive(Debug, Clone)]
pub(crate) struct Probes {
    omegas: Vec<Complex64>,
    norms2: Vec<f64>,
    channels: usize,
}

impl Probes {
    pub(crate) fn new(design: &FrequencyDesign, scale: f64) -> Self {
        let omegas: Vec<Complex64> = design.as_slice().iter().map(|w| w * scale).collect();
        let norms2 = omegas.chunks_exact(design.channels()).map(norm_sqr).collect();
        Self {
            omegas,
            norms2,
            channels: design.channels(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.norms2.len()
    }
}

/// Per-probe intermediates kept from a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct AtomEval {
    proj: Vec<Complex64>,
    pow: Vec<f64>,
    log_abs2: Vec<f64>,
    pub(crate) psi: Vec<f64>,
}

impl AtomEval {
    pub(crate) fn evaluate(&mut self, atom: &AtomParams, probes: &Probes) {
        let j = probes.len();
        self.proj.clear();
        self.pow.clear();
        self.log_abs2.clear();
        self.psi.clear();
        let sigma2 = atom.sigma2();
        for (w, &q) in probes.omegas.chunks_exact(probes.channels).zip(&probes.norms2) {
            let c = dot_conj(&atom.a, w);
            let abs2 = c.norm_sqr();
            let (pow, log_abs2) = if abs2 > 0.0 {
                if atom.alpha_locked && atom.alpha == 2.0 {
                    // log |c|² only feeds the α-gradient.
                    (abs2, 0.0)
                } else {
                    let l = libm::log(abs2);
                    (libm::exp(0.5 * atom.alpha * l), l)
                }
            } else {
                (0.0, 0.0)
            };
            self.proj.push(c);
            self.pow.push(pow);
            self.log_abs2.push(log_abs2);
            self.psi.push(libm::exp(-pow - sigma2 * q));
        }
        debug_assert_eq!(self.psi.len(), j);
    }

    /// Accumulates `Σ_j w_j ∂ψ_j` into `grad`.
    pub(crate) fn backward(&self, atom: &AtomParams, probes: &Probes, cotangent: &[f64], grad: &mut AtomGradient) {
        let sigma2 = atom.sigma2();
        let alpha = atom.alpha;
        let m = probes.channels;
        for (j, w) in probes.omegas.chunks_exact(m).enumerate() {
            let wpsi = cotangent[j] * self.psi[j];
            if wpsi == 0.0 {
                continue;
            }
            grad.log_sigma2 -= wpsi * sigma2 * probes.norms2[j];
            let pow = self.pow[j];
            if pow == 0.0 {
                // |a* ω| = 0: the α term g^α log g and the a-gradient vanish.
                continue;
            }
            if !atom.alpha_locked {
                grad.alpha -= wpsi * pow * 0.5 * self.log_abs2[j];
            }
            // ∂|c|^α / ∂x = (α/2) |c|^{α-2} ∂|c|²/∂x, with
            // ∂|c|²/∂Re a_m = 2 Re(conj(c) ω_m), ∂|c|²/∂Im a_m = 2 Im(conj(c) ω_m).
            let abs2 = self.proj[j].norm_sqr();
            let f = wpsi * alpha * pow / abs2;
            let cc = self.proj[j].conj();
            for (mi, wm) in w.iter().enumerate() {
                let z = cc * wm;
                grad.a_re[mi] -= f * z.re;
                grad.a_im[mi] -= f * z.im;
            }
        }
    }
}

/// `[ψ(ω_j)]_j` for one atom over a design.
pub fn atom_cf_vector(atom: &AtomParams, design: &FrequencyDesign) -> Result<Vec<f64>> {
    check_dims(atom, design)?;
    let probes = Probes::new(design, 1.0);
    let mut eval = AtomEval::default();
    eval.evaluate(atom, &probes);
    Ok(eval.psi)
}

/// Exact gradient of `⟨cotangent, atom_cf_vector(atom, design)⟩`.
///
/// The `α` slot is zero for locked atoms. Where `a* ω_j = 0` the `α` term is
/// taken as its limit 0.
pub fn atom_gradient(atom: &AtomParams, design: &FrequencyDesign, cotangent: &[f64]) -> Result<AtomGradient> {
    check_dims(atom, design)?;
    if cotangent.len() != design.len() {
        return Err(Error::shape("cotangent", design.len(), cotangent.len()));
    }
    let probes = Probes::new(design, 1.0);
    let mut eval = AtomEval::default();
    eval.evaluate(atom, &probes);
    let mut grad = AtomGradient::zeros(atom.a.len());
    eval.backward(atom, &probes, cotangent, &mut grad);
    Ok(grad)
}

fn check_dims(atom: &AtomParams, design: &FrequencyDesign) -> Result<()> {
    atom.validate()?;
    if atom.a.len() != design.channels() {
        return Err(Error::shape("steering vector", design.channels(), atom.a.len()));
    }
    Ok(())
}
