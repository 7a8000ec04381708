//! Mixture estimation from a characteristic-function sketch with CL-OMPR
//! (compressive-learning orthogonal matching pursuit with replacement).
//!
//! The fitted objective is `‖y − Σ_k β_k ψ_k‖²` over the stacked real and
//! imaginary parts of the sketch. Atoms are real, so the imaginary part of the
//! sketch only contributes a constant. Each outer iteration
//!
//! 1. adds the atom maximizing `Re⟨ψ/‖ψ‖, r⟩` against the residual `r`
//!    (several random starts, quasi-Newton ascent),
//! 2. hard-thresholds the support back to `K` atoms once it overflows,
//! 3. re-solves the non-negative weights,
//! 4. refines all atoms and weights jointly.
//!
//! Internally the design is rescaled by its radius scale `s` so that atoms
//! live in unit-free coordinates (`a/s`, `σ²/s²`).

mod atom;
mod nnls;
mod optim;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use atom::{atom_cf_vector, atom_gradient, AtomGradient, AtomParams, ALPHA_MAX, ALPHA_MIN};
pub use nnls::{kkt_residual, nnls};

use crate::error::{Error, Result};
use crate::sketch::{FrequencyDesign, Sketch};
use crate::stable::{standard_complex_normal, ComponentParams, MixtureParams};
use atom::{AtomEval, Probes};
use optim::{minimize, Bounds, DescentOptions};

/// Initial exponent of freshly drawn atoms.
const INIT_ALPHA: f64 = 1.8;
/// Initial residual variance, relative to the squared data scale.
const INIT_SIGMA2: f64 = 0.1;
/// Lower bound on weights entering the log-parameterized joint descent.
const WEIGHT_FLOOR: f64 = 1e-10;
const LBFGS_MEMORY: usize = 10;
/// Cap on the per-coordinate change in one descent step.
const MAX_STEP: f64 = 2.0;
/// Box on normalized atom parameters. Without it the normalized correlation
/// is maximized by degenerate atoms that vanish on all but a few probes.
const SIGMA2_MIN: f64 = 1e-6;
const SIGMA2_MAX: f64 = 10.0;
/// Bound on the real and imaginary part of each steering entry.
const AMPLITUDE_MAX: f64 = 3.0;

/// Schedule of one CL-OMPR fit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitOptions {
    pub components: usize,
    pub n_outer_iterations: usize,
    pub n_inits_per_atom: usize,
    pub max_gradient_steps: usize,
    /// Relative objective change that ends a descent.
    pub tolerance: f64,
    pub seed: u64,
    /// Gaussian-constrained atoms (`α ≡ 2`).
    pub alpha_locked: bool,
}

impl FitOptions {
    pub fn new(components: usize) -> Self {
        Self {
            components,
            n_outer_iterations: 2 * components,
            n_inits_per_atom: 5,
            max_gradient_steps: 300,
            tolerance: 1e-8,
            seed: 0,
            alpha_locked: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn gaussian(mut self) -> Self {
        self.alpha_locked = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.n_outer_iterations == 0 || self.n_inits_per_atom == 0 || self.max_gradient_steps == 0 {
            return Err(Error::InvalidParams("fit schedule counts must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::domain("tolerance", self.tolerance, "[0, inf)"));
        }
        Ok(())
    }
}

/// Result of a CL-OMPR fit with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ClomprFit {
    pub mixture: MixtureParams,
    /// Unnormalized weights `β_k`.
    pub weights: Vec<f64>,
    /// Final `‖y − Σ_k β_k ψ_k‖²`.
    pub objective: f64,
    /// `‖y‖²`.
    pub sketch_energy: f64,
    /// Objective values along each joint descent.
    pub descent_traces: Vec<Vec<f64>>,
}

impl ClomprFit {
    pub fn residual_norm(&self) -> f64 {
        libm::sqrt(self.objective)
    }
}

/// Fits a `K`-component α-stable (or Gaussian, if `alpha_locked`) mixture.
pub fn clompr_fit(sketch: &Sketch, design: &FrequencyDesign, opts: &FitOptions) -> Result<MixtureParams> {
    clompr_fit_detailed(sketch, design, opts).map(|f| f.mixture)
}

/// Flat real coordinates of atoms: `Re a`, `Im a`, `α` (unless locked),
/// `σ²`, each confined to a box.
#[derive(Debug, Clone, Copy)]
struct Layout {
    m: usize,
    locked: bool,
}

impl Layout {
    fn len(&self) -> usize {
        2 * self.m + usize::from(!self.locked) + 1
    }

    fn pack(&self, atom: &AtomParams, out: &mut Vec<f64>) {
        out.extend(atom.a.iter().map(|v| v.re));
        out.extend(atom.a.iter().map(|v| v.im));
        if !self.locked {
            out.push(atom.alpha);
        }
        out.push(atom.sigma2());
    }

    fn unpack(&self, x: &[f64], atom: &mut AtomParams) {
        let m = self.m;
        for i in 0..m {
            atom.a[i] = Complex64::new(x[i], x[m + i]);
        }
        let sigma2 = if self.locked {
            atom.alpha = 2.0;
            x[2 * m]
        } else {
            atom.alpha = x[2 * m];
            x[2 * m + 1]
        };
        atom.log_sigma2 = libm::log(sigma2);
    }

    /// `g` holds derivatives in atom coordinates; `x` the packed point.
    fn pack_gradient(&self, x: &[f64], g: &AtomGradient, out: &mut [f64]) {
        let m = self.m;
        out[..m].copy_from_slice(&g.a_re);
        out[m..2 * m].copy_from_slice(&g.a_im);
        if self.locked {
            out[2 * m] = g.log_sigma2 / x[2 * m];
        } else {
            out[2 * m] = g.alpha;
            out[2 * m + 1] = g.log_sigma2 / x[2 * m + 1];
        }
    }

    fn push_bounds(&self, bounds: &mut Bounds) {
        let r = AMPLITUDE_MAX;
        for _ in 0..2 * self.m {
            bounds.lower.push(-r);
            bounds.upper.push(r);
        }
        if !self.locked {
            bounds.lower.push(ALPHA_MIN);
            bounds.upper.push(ALPHA_MAX);
        }
        bounds.lower.push(SIGMA2_MIN);
        bounds.upper.push(SIGMA2_MAX);
    }

    fn bounds(&self) -> Bounds {
        let mut b = Bounds {
            lower: Vec::new(),
            upper: Vec::new(),
        };
        self.push_bounds(&mut b);
        b
    }

    fn blank_atom(&self) -> AtomParams {
        AtomParams {
            a: vec![Complex64::new(0.0, 0.0); self.m],
            alpha: 2.0,
            log_sigma2: 0.0,
            alpha_locked: self.locked,
        }
    }
}

struct Solver<'a> {
    probes: Probes,
    target: &'a [Complex64],
    layout: Layout,
    descent: DescentOptions,
}

impl Solver<'_> {
    fn j(&self) -> usize {
        self.probes.len()
    }

    /// Stacked `[Re; Im]` columns for the given atoms, optionally normalized.
    fn stacked_columns(&self, atoms: &[AtomParams], normalize: bool) -> Vec<Vec<f64>> {
        let mut eval = AtomEval::default();
        atoms
            .iter()
            .map(|atom| {
                eval.evaluate(atom, &self.probes);
                let norm = if normalize {
                    libm::sqrt(eval.psi.iter().map(|v| v * v).sum::<f64>()).max(f64::MIN_POSITIVE)
                } else {
                    1.0
                };
                let mut col: Vec<f64> = eval.psi.iter().map(|v| v / norm).collect();
                col.resize(2 * self.j(), 0.0);
                col
            })
            .collect()
    }

    fn stacked_target(&self) -> Vec<f64> {
        self.target.iter().map(|y| y.re).chain(self.target.iter().map(|y| y.im)).collect()
    }

    fn weights(&self, atoms: &[AtomParams], normalize: bool) -> Result<Vec<f64>> {
        nnls(&self.stacked_columns(atoms, normalize), &self.stacked_target())
    }

    /// Real part of `y − Σ β_k ψ_k`.
    fn residual(&self, atoms: &[AtomParams], beta: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self.target.iter().map(|y| y.re).collect();
        let mut eval = AtomEval::default();
        for (atom, &b) in atoms.iter().zip(beta) {
            eval.evaluate(atom, &self.probes);
            for (rj, p) in r.iter_mut().zip(&eval.psi) {
                *rj -= b * p;
            }
        }
        r
    }

    fn imag_energy(&self) -> f64 {
        self.target.iter().map(|y| y.im * y.im).sum()
    }

    fn random_atom(&self, rng: &mut ChaCha8Rng) -> AtomParams {
        AtomParams {
            a: (0..self.layout.m).map(|_| standard_complex_normal(rng)).collect(),
            alpha: if self.layout.locked { 2.0 } else { INIT_ALPHA },
            log_sigma2: libm::log(INIT_SIGMA2),
            alpha_locked: self.layout.locked,
        }
    }

    /// `−⟨ψ, r⟩/‖ψ‖` at free coordinates `x`, with its gradient.
    fn search_objective(&self, x: &[f64], residual: &[f64], grad: &mut [f64], scratch: &mut Scratch) -> f64 {
        let layout = self.layout;
        let atom = &mut scratch.atoms[0];
        let eval = &mut scratch.evals[0];
        layout.unpack(x, atom);
        eval.evaluate(atom, &self.probes);
        let norm2: f64 = eval.psi.iter().map(|v| v * v).sum();
        if !(norm2 > 1e-300) {
            return f64::INFINITY;
        }
        let norm = libm::sqrt(norm2);
        let corr: f64 = eval.psi.iter().zip(residual).map(|(p, r)| p * r).sum();
        // d(−⟨ψ,r⟩/‖ψ‖)/dψ = −r/‖ψ‖ + ⟨ψ,r⟩ ψ/‖ψ‖³
        for ((c, r), p) in scratch.cot.iter_mut().zip(residual).zip(&eval.psi) {
            *c = -r / norm + corr * p / (norm2 * norm);
        }
        let mut g = AtomGradient::zeros(layout.m);
        eval.backward(atom, &self.probes, &scratch.cot, &mut g);
        layout.pack_gradient(x, &g, grad);
        -corr / norm
    }

    /// Maximizes the normalized correlation of one atom with the residual.
    /// Returns the refined atom and its correlation.
    fn search_atom(&self, start: &AtomParams, residual: &[f64]) -> Result<(AtomParams, f64)> {
        let layout = self.layout;
        let mut x0 = Vec::with_capacity(layout.len());
        layout.pack(start, &mut x0);
        let mut scratch = Scratch::new(layout, 1, self.j());
        let found = minimize(|x, g| self.search_objective(x, residual, g, &mut scratch), x0, &layout.bounds(), self.descent)?;
        let mut best = layout.blank_atom();
        layout.unpack(&found.x, &mut best);
        Ok((best, -found.value))
    }

    /// `‖y − Σ_k β_k ψ_k‖²` over `k` packed atoms followed by `k` log-weights.
    fn joint_objective(&self, x: &[f64], grad: &mut [f64], scratch: &mut Scratch) -> f64 {
        let layout = self.layout;
        let per = layout.len();
        let k = scratch.atoms.len();
        for (r, y) in scratch.resid.iter_mut().zip(self.target) {
            *r = y.re;
        }
        for i in 0..k {
            layout.unpack(&x[i * per..(i + 1) * per], &mut scratch.atoms[i]);
            scratch.evals[i].evaluate(&scratch.atoms[i], &self.probes);
            let b = libm::exp(x[k * per + i]);
            for (r, p) in scratch.resid.iter_mut().zip(&scratch.evals[i].psi) {
                *r -= b * p;
            }
        }
        let value: f64 = scratch.resid.iter().map(|r| r * r).sum::<f64>() + self.imag_energy();
        for i in 0..k {
            let b = libm::exp(x[k * per + i]);
            for (c, r) in scratch.cot.iter_mut().zip(&scratch.resid) {
                *c = -2.0 * b * r;
            }
            let mut g = AtomGradient::zeros(layout.m);
            scratch.evals[i].backward(&scratch.atoms[i], &self.probes, &scratch.cot, &mut g);
            layout.pack_gradient(&x[i * per..(i + 1) * per], &g, &mut grad[i * per..(i + 1) * per]);
            let dot: f64 = scratch.resid.iter().zip(&scratch.evals[i].psi).map(|(r, p)| r * p).sum();
            grad[k * per + i] = -2.0 * b * dot;
        }
        value
    }

    fn pack_joint(&self, atoms: &[AtomParams], beta: &[f64]) -> Vec<f64> {
        let floor = WEIGHT_FLOOR * beta.iter().copied().fold(1.0, f64::max);
        let mut x = Vec::with_capacity(atoms.len() * (self.layout.len() + 1));
        for atom in atoms {
            self.layout.pack(atom, &mut x);
        }
        x.extend(beta.iter().map(|&b| libm::log(b.max(floor))));
        x
    }

    /// Joint refinement of all atoms and (log-)weights on the full objective.
    fn joint_descent(&self, atoms: &mut [AtomParams], beta: &mut [f64]) -> Result<Vec<f64>> {
        let layout = self.layout;
        let k = atoms.len();
        let per = layout.len();
        let x0 = self.pack_joint(atoms, beta);
        let mut scratch = Scratch::new(layout, k, self.j());
        let mut bounds = Bounds::unbounded(0);
        for _ in 0..k {
            layout.push_bounds(&mut bounds);
        }
        bounds.lower.extend(core::iter::repeat_n(f64::NEG_INFINITY, k));
        bounds.upper.extend(core::iter::repeat_n(f64::INFINITY, k));
        let found = minimize(|x, g| self.joint_objective(x, g, &mut scratch), x0, &bounds, self.descent)?;
        for (i, atom) in atoms.iter_mut().enumerate() {
            layout.unpack(&found.x[i * per..(i + 1) * per], atom);
        }
        for (i, b) in beta.iter_mut().enumerate() {
            *b = libm::exp(found.x[k * per + i]);
        }
        Ok(found.trace)
    }
}

/// Buffers reused across objective evaluations.
struct Scratch {
    atoms: Vec<AtomParams>,
    evals: Vec<AtomEval>,
    resid: Vec<f64>,
    cot: Vec<f64>,
}

impl Scratch {
    fn new(layout: Layout, k: usize, j: usize) -> Self {
        Self {
            atoms: (0..k).map(|_| layout.blank_atom()).collect(),
            evals: (0..k).map(|_| AtomEval::default()).collect(),
            resid: vec![0.0; j],
            cot: vec![0.0; j],
        }
    }
}

/// As [`clompr_fit`], returning weights and descent diagnostics.
pub fn clompr_fit_detailed(sketch: &Sketch, design: &FrequencyDesign, opts: &FitOptions) -> Result<ClomprFit> {
    opts.validate()?;
    if sketch.len() != design.len() {
        return Err(Error::shape("sketch", design.len(), sketch.len()));
    }
    let target = sketch.values();
    let sketch_energy: f64 = target.iter().map(|y| y.norm_sqr()).sum();
    if sketch_energy == 0.0 {
        return Err(Error::InvalidParams("sketch is identically zero".into()));
    }
    let scale = design.radius_scale();
    let solver = Solver {
        probes: Probes::new(design, scale),
        target,
        layout: Layout {
            m: design.channels(),
            locked: opts.alpha_locked,
        },
        descent: DescentOptions {
            max_steps: opts.max_gradient_steps,
            rel_tol: opts.tolerance,
            memory: LBFGS_MEMORY,
            max_step: MAX_STEP,
        },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let k_max = opts.components;
    let mut atoms: Vec<AtomParams> = Vec::with_capacity(k_max + 1);
    let mut beta: Vec<f64> = Vec::new();
    let mut residual: Vec<f64> = target.iter().map(|y| y.re).collect();
    let mut traces = Vec::with_capacity(opts.n_outer_iterations);

    for _ in 0..opts.n_outer_iterations {
        // Candidate atom: best of several random starts, earlier start on ties.
        let mut best: Option<(AtomParams, f64)> = None;
        let mut last_err = None;
        for _ in 0..opts.n_inits_per_atom {
            let start = solver.random_atom(&mut rng);
            match solver.search_atom(&start, &residual) {
                Ok((atom, corr)) if corr.is_finite() => {
                    if best.as_ref().is_none_or(|(_, c)| corr > *c) {
                        best = Some((atom, corr));
                    }
                }
                Ok(_) => last_err = Some(Error::Numerical("non-finite correlation".into())),
                Err(e) => last_err = Some(e),
            }
        }
        let Some((atom, _)) = best else {
            let cause = last_err.map(|e| format!("{e}")).unwrap_or_default();
            return Err(Error::Numerical(format!("every atom initialization failed: {cause}")));
        };
        atoms.push(atom);

        if atoms.len() > k_max {
            let w = solver.weights(&atoms, true)?;
            let mut order: Vec<usize> = (0..atoms.len()).collect();
            // Stable sort keeps the earlier atom on equal weights.
            order.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
            let mut keep = order[..k_max].to_vec();
            keep.sort_unstable();
            atoms = keep.into_iter().map(|i| atoms[i].clone()).collect();
        }

        beta = solver.weights(&atoms, false)?;
        traces.push(solver.joint_descent(&mut atoms, &mut beta)?);
        residual = solver.residual(&atoms, &beta);
    }

    let objective = residual.iter().map(|r| r * r).sum::<f64>() + solver.imag_energy();
    let total: f64 = beta.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numerical("all mixture weights vanished".into()));
    }
    let components = atoms
        .iter()
        .zip(&beta)
        .map(|(atom, &b)| {
            let a: Vec<Complex64> = atom.a.iter().map(|v| v * scale).collect();
            let sigma2 = (atom.sigma2() * scale * scale).max(f64::MIN_POSITIVE);
            ComponentParams::new(a, atom.alpha, sigma2, b / total)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mixture = MixtureParams::new(components.clone());
    if mixture.is_err() {
        // Renormalize weights that drifted by rounding.
        let sum: f64 = components.iter().map(|c| c.pi).sum();
        let fixed = components
            .into_iter()
            .map(|c| ComponentParams { pi: c.pi / sum, ..c })
            .collect();
        mixture = MixtureParams::new(fixed);
    }
    Ok(ClomprFit {
        mixture: mixture?,
        weights: beta,
        objective,
        sketch_energy,
        descent_traces: traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn solver_fixture(target: &[Complex64], locked: bool) -> (Solver<'_>, ChaCha8Rng) {
        let design = FrequencyDesign::from_scale(2, target.len(), 0.7, 11).unwrap();
        let solver = Solver {
            probes: Probes::new(&design, design.radius_scale()),
            target,
            layout: Layout { m: 2, locked },
            descent: DescentOptions {
                max_steps: 10,
                rel_tol: 1e-8,
                memory: 5,
                max_step: MAX_STEP,
            },
        };
        (solver, ChaCha8Rng::seed_from_u64(5))
    }

    fn check_fd(f: &mut dyn FnMut(&[f64], &mut [f64]) -> f64, x: &[f64]) {
        let mut g = vec![0.0; x.len()];
        f(x, &mut g);
        let mut scratch = vec![0.0; x.len()];
        for i in 0..x.len() {
            let h = 1e-6;
            let mut xp = x.to_vec();
            xp[i] += h;
            let mut xm = x.to_vec();
            xm[i] -= h;
            let fd = (f(&xp, &mut scratch) - f(&xm, &mut scratch)) / (2.0 * h);
            let tol = 1e-5 * (1.0 + fd.abs().max(g[i].abs()));
            assert!((fd - g[i]).abs() < tol, "coordinate {i}: analytic {} vs fd {fd}", g[i]);
        }
    }

    fn random_point(layout: &Layout, rng: &mut ChaCha8Rng, k: usize, weights: bool) -> Vec<f64> {
        let mut x = Vec::new();
        for _ in 0..k {
            let atom = AtomParams {
                a: (0..layout.m).map(|_| Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5))).collect(),
                alpha: if layout.locked { 2.0 } else { rng.random_range(0.3..2.0) },
                log_sigma2: rng.random_range(-4.0..0.0),
                alpha_locked: layout.locked,
            };
            layout.pack(&atom, &mut x);
        }
        if weights {
            x.extend((0..k).map(|_| rng.random_range(-1.0..1.0)));
        }
        x
    }

    fn random_target(rng: &mut ChaCha8Rng, j: usize) -> Vec<Complex64> {
        (0..j).map(|_| Complex64::new(rng.random_range(0.0..1.0), rng.random_range(-0.1..0.1))).collect()
    }

    #[test]
    fn packing_round_trips() {
        for locked in [false, true] {
            let layout = Layout { m: 3, locked };
            let atom = AtomParams::new(
                vec![Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.1), Complex64::new(-0.5, 0.0)],
                if locked { 2.0 } else { 1.3 },
                libm::log(0.02),
                locked,
            )
            .unwrap();
            let mut x = Vec::new();
            layout.pack(&atom, &mut x);
            assert_eq!(x.len(), layout.len());
            let mut back = layout.blank_atom();
            layout.unpack(&x, &mut back);
            for (p, q) in atom.a.iter().zip(&back.a) {
                assert!((p - q).norm() < 1e-12);
            }
            assert!((atom.alpha - back.alpha).abs() < 1e-12);
            assert!((atom.log_sigma2 - back.log_sigma2).abs() < 1e-10);
        }
    }

    #[test]
    fn search_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let target = random_target(&mut rng, 40);
        for locked in [false, true] {
            let (solver, mut rng) = solver_fixture(&target, locked);
            let residual: Vec<f64> = target.iter().map(|y| y.re - 0.3).collect();
            let mut scratch = Scratch::new(solver.layout, 1, solver.j());
            for _ in 0..5 {
                let x = random_point(&solver.layout, &mut rng, 1, false);
                check_fd(&mut |x, g| solver.search_objective(x, &residual, g, &mut scratch), &x);
            }
        }
    }

    #[test]
    fn joint_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let target = random_target(&mut rng, 40);
        for locked in [false, true] {
            let (solver, mut rng) = solver_fixture(&target, locked);
            let k = 3;
            let mut scratch = Scratch::new(solver.layout, k, solver.j());
            for _ in 0..5 {
                let x = random_point(&solver.layout, &mut rng, k, true);
                check_fd(&mut |x, g| solver.joint_objective(x, g, &mut scratch), &x);
            }
        }
    }
}
