//! Non-negative least squares (Lawson–Hanson active set).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimizes `‖target − Σ_k β_k columns[k]‖₂` subject to `β ≥ 0`.
///
/// Columns are the (stacked real) atoms; ties when a variable enters the
/// passive set go to the lowest index.
pub fn nnls(columns: &[Vec<f64>], target: &[f64]) -> Result<Vec<f64>> {
    let n = columns.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let rows = target.len();
    for c in columns {
        if c.len() != rows {
            return Err(Error::shape("nnls column", rows, c.len()));
        }
    }
    if columns.iter().flatten().chain(target).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("nnls inputs must be finite".into()));
    }

    let a = DMatrix::from_fn(rows, n, |i, j| columns[j][i]);
    let b = DVector::from_column_slice(target);
    let scale = a.norm() * b.norm();
    let tol = 1e-14 * scale.max(f64::MIN_POSITIVE);

    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let mut w = a.tr_mul(&(&b - &a * &x));

    for _ in 0..(3 * n + 10) {
        let entering = (0..n)
            .filter(|&j| !passive[j])
            .fold(None::<usize>, |best, j| match best {
                Some(b) if w[b] >= w[j] => Some(b),
                _ => Some(j),
            });
        let Some(j) = entering.filter(|&j| w[j] > tol) else { break };
        passive[j] = true;

        loop {
            let z = solve_passive(&a, &b, &passive)?;
            if (0..n).filter(|&i| passive[i]).all(|i| z[i] > 0.0) {
                x = z;
                break;
            }
            // Step back towards x until the first passive variable hits zero.
            let mut step = f64::INFINITY;
            for i in (0..n).filter(|&i| passive[i] && z[i] <= 0.0) {
                step = step.min(x[i] / (x[i] - z[i]));
            }
            for i in 0..n {
                x[i] += step * (z[i] - x[i]);
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        w = a.tr_mul(&(&b - &a * &x));
    }
    Ok(x.iter().copied().collect())
}

/// Unconstrained least squares restricted to the passive columns.
fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> Result<DVector<f64>> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let sub = a.select_columns(&idx);
    let svd = sub.svd(true, true);
    let sol = svd
        .solve(b, 1e-13 * svd.singular_values.max())
        .map_err(|e| Error::Numerical(alloc::format!("nnls subproblem: {e}")))?;
    let mut z = DVector::zeros(passive.len());
    for (k, &i) in idx.iter().enumerate() {
        z[i] = sol[k];
    }
    Ok(z)
}

/// Largest violation of the NNLS optimality conditions.
pub fn kkt_residual(columns: &[Vec<f64>], target: &[f64], beta: &[f64]) -> f64 {
    let mut resid = target.to_vec();
    for (c, &b) in columns.iter().zip(beta) {
        for (r, v) in resid.iter_mut().zip(c) {
            *r -= b * v;
        }
    }
    columns
        .iter()
        .zip(beta)
        .map(|(c, &b)| {
            let g: f64 = c.iter().zip(&resid).map(|(x, r)| x * r).sum();
            if b > 0.0 {
                libm::fabs(g)
            } else {
                g.max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objective(columns: &[Vec<f64>], target: &[f64], beta: &[f64]) -> f64 {
        (0..target.len())
            .map(|i| {
                let fit: f64 = columns.iter().zip(beta).map(|(c, b)| c[i] * b).sum();
                (target[i] - fit).powi(2)
            })
            .sum()
    }

    #[test]
    fn exact_single_atom() {
        let col = vec![0.3, -1.0, 2.0, 0.5];
        assert_eq!(nnls(core::slice::from_ref(&col), &col).unwrap().len(), 1);
        assert!((nnls(core::slice::from_ref(&col), &col).unwrap()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nonnegativity_binds() {
        let col = vec![1.0, 1.0, 0.0];
        let target = vec![-1.0, -2.0, 5.0];
        assert_eq!(nnls(&[col], &target).unwrap(), vec![0.0]);
    }

    #[test]
    fn empty_and_bad_shapes() {
        assert!(nnls(&[], &[1.0, 2.0]).unwrap().is_empty());
        assert!(nnls(&[vec![1.0]], &[1.0, 2.0]).is_err());
    }

    /// Minimum over all supports of the unconstrained least-squares fit on
    /// that support, keeping only nonnegative solutions.
    fn brute_force(columns: &[Vec<f64>], target: &[f64]) -> f64 {
        let n = columns.len();
        let mut best = objective(columns, target, &vec![0.0; n]);
        for mask in 1u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let p = idx.len();
            // Normal equations, solved by Gauss-Jordan elimination.
            let mut m = vec![vec![0.0; p + 1]; p];
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    m[r][c] = columns[i].iter().zip(&columns[j]).map(|(x, y)| x * y).sum();
                }
                m[r][p] = columns[i].iter().zip(target).map(|(x, y)| x * y).sum();
            }
            for c in 0..p {
                let pivot = (c..p).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
                m.swap(c, pivot);
                for r in 0..p {
                    if r != c {
                        let f = m[r][c] / m[c][c];
                        for q in c..=p {
                            m[r][q] -= f * m[c][q];
                        }
                    }
                }
            }
            let mut beta = vec![0.0; n];
            for (r, &i) in idx.iter().enumerate() {
                beta[i] = m[r][p] / m[r][r];
            }
            if beta.iter().all(|&b| b >= 0.0) {
                best = best.min(objective(columns, target, &beta));
            }
        }
        best
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let columns: Vec<Vec<f64>> = (0..3).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let target: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..2.0)).collect();
            let beta = nnls(&columns, &target).unwrap();
            assert!(beta.iter().all(|&b| b >= 0.0));
            assert!(kkt_residual(&columns, &target, &beta) < 1e-8);
            let ours = objective(&columns, &target, &beta);
            let grid = brute_force(&columns, &target);
            assert!((ours - grid).abs() <= 1e-8, "{ours} vs {grid}");
        }
    }
}
