//! Box-constrained limited-memory quasi-Newton descent with Armijo
//! backtracking along the projected path.
//!
//! Coordinates sitting on a bound with the gradient pushing outwards are held
//! fixed for the step; the remaining ones follow the two-loop L-BFGS
//! direction.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct DescentOptions {
    pub max_steps: usize,
    /// Stop once `|f_k − f_{k+1}| ≤ rel_tol · |f_k|`.
    pub rel_tol: f64,
    pub memory: usize,
    /// Largest change of any coordinate in one step.
    pub max_step: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Descent {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-coordinate bounds; infinite entries leave a side open.
#[derive(Debug, Clone)]
pub(crate) struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn blocked(&self, i: usize, x: f64, g: f64) -> bool {
        (x <= self.lower[i] && g > 0.0) || (x >= self.upper[i] && g < 0.0)
    }
}

/// Minimizes `f`, which returns the objective and writes the gradient, over
/// the box `bounds`. Non-finite trial values are rejected by the line search.
pub(crate) fn minimize<F>(mut f: F, x0: Vec<f64>, bounds: &Bounds, opts: DescentOptions) -> Result<Descent>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    bounds.project(&mut x);
    let mut g = vec![0.0; n];
    let mut value = f(&x, &mut g);
    if !value.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("objective is not finite at the starting point".into()));
    }
    let mut trace = vec![value];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut stalled = 0;

    let mut free_g = vec![0.0; n];
    for _ in 0..opts.max_steps {
        for i in 0..n {
            free_g[i] = if bounds.blocked(i, x[i], g[i]) { 0.0 } else { g[i] };
        }
        let gnorm = libm::sqrt(dot(&free_g, &free_g));
        if gnorm == 0.0 {
            break;
        }
        // Two-loop recursion.
        dir.copy_from_slice(&free_g);
        for (i, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha_buf[i] = a;
            for (d, yv) in dir.iter_mut().zip(y) {
                *d -= a * yv;
            }
        }
        let gamma = match pairs.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gnorm.max(1.0),
        };
        for d in dir.iter_mut() {
            *d *= gamma;
        }
        for (i, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &dir);
            for (d, sv) in dir.iter_mut().zip(s) {
                *d += (alpha_buf[i] - b) * sv;
            }
        }
        for (i, d) in dir.iter_mut().enumerate() {
            *d = if free_g[i] == 0.0 && bounds.blocked(i, x[i], g[i]) { 0.0 } else { -*d };
        }
        if !(dot(&free_g, &dir) < 0.0) {
            pairs.clear();
            for (d, gv) in dir.iter_mut().zip(&free_g) {
                *d = -gv / gnorm.max(1.0);
            }
        }

        let longest = dir.iter().fold(0.0f64, |acc, d| acc.max(libm::fabs(*d)));
        let mut step = if longest > opts.max_step { opts.max_step / longest } else { 1.0 };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            bounds.project(&mut x_new);
            // Projection can turn the step uphill; never accept an increase.
            let decrease = (0..n).map(|i| g[i] * (x_new[i] - x[i])).sum::<f64>().min(0.0);
            let trial = f(&x_new, &mut g_new);
            if trial.is_finite() && g_new.iter().all(|v| v.is_finite()) && trial <= value + ARMIJO * decrease {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(new_value) = accepted else { break };
        debug_assert!(new_value <= value);

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * libm::sqrt(dot(&s, &s) * dot(&y, &y)) && sy > 0.0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        core::mem::swap(&mut x, &mut x_new);
        core::mem::swap(&mut g, &mut g_new);
        let change = value - new_value;
        value = new_value;
        trace.push(value);
        // A single short step is not enough evidence of convergence.
        if change <= opts.rel_tol * libm::fabs(trace[trace.len() - 2]) {
            stalled += 1;
            if stalled == 2 {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(Descent { x, value, trace })
}
