use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stablesep_core::em::{em_fit, per_frequency_loglik, responsibilities, EmOptions, VARIANCE_FLOOR};
use stablesep_core::{Complex64, ComponentParams, MixtureParams, Observations};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cn(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Points `a_k g + σ_k n` with `g, n` standard circular Gaussian, plus labels.
fn gaussian_mixture(comps: &[(Vec<Complex64>, f64, f64)], t: usize, seed: u64) -> (Observations, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..t {
        let u: f64 = rng.random();
        let mut k = 0;
        let mut acc = comps[0].2;
        while u >= acc && k + 1 < comps.len() {
            k += 1;
            acc += comps[k].2;
        }
        let (a, sigma2, _) = &comps[k];
        let g = cn(&mut rng);
        for &am in a {
            values.push(am * g + cn(&mut rng) * sigma2.sqrt());
        }
        labels.push(k);
    }
    (Observations::new(values, comps[0].0.len()).unwrap(), labels)
}

fn steering_corr(x: &[Complex64], y: &[Complex64]) -> f64 {
    let dot: Complex64 = x.iter().zip(y).map(|(a, b)| a.conj() * b).sum();
    let nx: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    dot.norm() / (nx * ny)
}

fn covariance(comp: &ComponentParams, scale: f64) -> DMatrix<Complex64> {
    let m = comp.a.len();
    DMatrix::from_fn(m, m, |i, j| {
        let d = if i == j { comp.sigma2 } else { 0.0 };
        (comp.a[i] * comp.a[j].conj() + d) * scale
    })
}

#[test]
fn single_component_matches_sample_covariance() {
    let a = vec![c(0.9, 0.1), c(-0.2, 0.5)];
    let (data, _) = gaussian_mixture(&[(a.clone(), 0.04, 1.0)], 50000, 1);
    let fit = em_fit(&data, &EmOptions::new(1).with_seed(3)).unwrap();
    let comp = &fit.mixture.components()[0];
    assert!(steering_corr(&comp.a, &a) > 0.999);
    let m = 2;
    let mut s = DMatrix::<Complex64>::zeros(m, m);
    for x in data.iter() {
        for i in 0..m {
            for j in 0..m {
                s[(i, j)] += x[i] * x[j].conj();
            }
        }
    }
    s /= c(data.len() as f64, 0.0);
    let diff = (covariance(comp, 1.0) - &s).norm() / s.norm();
    assert!(diff < 1e-7, "relative covariance error {diff}");
    assert_eq!(comp.alpha, 2.0);
}

#[test]
fn single_component_responsibilities_are_one() {
    let (data, _) = gaussian_mixture(&[(vec![c(1.0, 0.0), c(0.0, 1.0)], 0.1, 1.0)], 100, 2);
    let theta = MixtureParams::new(vec![ComponentParams::new(vec![c(0.3, 0.0), c(1.0, 0.0)], 2.0, 0.5, 1.0).unwrap()]).unwrap();
    let gamma = responsibilities(&data, &theta, 1.0).unwrap();
    assert!(gamma.iter().all(|&g| g == 1.0));
}

#[test]
fn separates_orthogonal_components() {
    let comps = [(vec![c(1.0, 0.0), c(0.0, 0.0)], 0.01, 0.5), (vec![c(0.0, 0.0), c(1.0, 0.0)], 0.01, 0.5)];
    let (data, labels) = gaussian_mixture(&comps, 20000, 4);
    let fit = em_fit(&data, &EmOptions::new(2).with_seed(5)).unwrap();
    let gamma = responsibilities(&data, &fit.mixture, 1.0).unwrap();
    let est: Vec<usize> = gamma.chunks(2).map(|g| usize::from(g[1] > g[0])).collect();
    let same = est.iter().zip(&labels).filter(|(e, l)| e == l).count() as f64 / labels.len() as f64;
    let accuracy = same.max(1.0 - same);
    assert!(accuracy > 0.99, "accuracy {accuracy}");
}

#[test]
fn likelihood_history_is_monotone_and_outputs_valid() {
    let comps = [
        (vec![c(1.0, 0.2), c(0.3, -0.1)], 0.05, 0.3),
        (vec![c(-0.2, 0.4), c(0.8, 0.0)], 0.02, 0.5),
        (vec![c(0.5, 0.5), c(-0.5, 0.5)], 0.1, 0.2),
    ];
    let (data, _) = gaussian_mixture(&comps, 3000, 6);
    for seed in 0..4 {
        let fit = em_fit(&data, &EmOptions::new(3).with_seed(seed)).unwrap();
        for w in fit.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "log-likelihood decreased: {} -> {}", w[0], w[1]);
        }
        let total: f64 = fit.mixture.components().iter().map(|k| k.pi).sum();
        assert!((total - 1.0).abs() <= 1e-9);
        assert!(fit.mixture.components().iter().all(|k| k.sigma2 > 0.0 && k.alpha == 2.0));
        let ll = per_frequency_loglik(&data, &fit.mixture, 1.0).unwrap();
        assert!((ll - fit.loglik).abs() <= 1e-9 * ll.abs());
        let gamma = responsibilities(&data, &fit.mixture, 1.0).unwrap();
        for row in gamma.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn variance_floor_holds_on_noiseless_data() {
    // Rank-one data: the PPCA residual variance is exactly zero before flooring.
    let (data, _) = gaussian_mixture(&[(vec![c(1.0, 0.0), c(0.5, 0.5)], 0.0, 1.0)], 500, 7);
    let fit = em_fit(&data, &EmOptions::new(1)).unwrap();
    let comp = &fit.mixture.components()[0];
    let trace: f64 = data.iter().map(|x| x.iter().map(|v| v.norm_sqr()).sum::<f64>()).sum::<f64>() / 500.0;
    assert!(comp.sigma2 >= VARIANCE_FLOOR * trace / 2.0 * (1.0 - 1e-9));
}

#[test]
fn normalized_mode_is_invariant_to_power_of_two_scaling() {
    let comps = [(vec![c(1.0, 0.2), c(0.3, -0.1)], 0.05, 0.5), (vec![c(-0.2, 0.4), c(0.8, 0.0)], 0.02, 0.5)];
    let (data, _) = gaussian_mixture(&comps, 2000, 8);
    let opts = EmOptions::new(2).with_seed(9).normalized();
    let base = em_fit(&data, &opts).unwrap();
    for scale in [0.25, 8.0, 1024.0] {
        let scaled = Observations::new(data.as_slice().iter().map(|v| v * scale).collect(), 2).unwrap();
        assert_eq!(em_fit(&scaled, &opts).unwrap(), base);
    }
}

#[test]
fn normalized_mode_drops_zero_points() {
    let comps = [(vec![c(1.0, 0.0), c(0.3, 0.0)], 0.05, 1.0)];
    let (data, _) = gaussian_mixture(&comps, 300, 10);
    let mut values = data.as_slice().to_vec();
    values.extend([c(0.0, 0.0); 20]);
    let padded = Observations::new(values, 2).unwrap();
    let opts = EmOptions::new(1).normalized();
    assert_eq!(em_fit(&padded, &opts).unwrap(), em_fit(&data, &opts).unwrap());
}

#[test]
fn error_cases() {
    let empty = Observations::new(Vec::new(), 2).unwrap();
    assert!(em_fit(&empty, &EmOptions::new(1)).is_err());
    let zeros = Observations::new(vec![c(0.0, 0.0); 20], 2).unwrap();
    assert!(em_fit(&zeros, &EmOptions::new(2)).is_err());
    let theta = MixtureParams::new(vec![ComponentParams::new(vec![c(1.0, 0.0), c(0.0, 0.0)], 2.0, 1.0, 1.0).unwrap()]).unwrap();
    assert_eq!(per_frequency_loglik(&empty, &theta, 4.0).unwrap(), 0.0);
}

#[test]
fn scalar_loglik_closed_form() {
    let theta = MixtureParams::new(vec![ComponentParams::new(vec![c(0.6, -0.8)], 2.0, 0.5, 1.0).unwrap()]).unwrap();
    let data = Observations::new(vec![c(0.3, 0.4), c(-1.0, 2.0)], 1).unwrap();
    for scale in [1.0f64, 4.0] {
        let v: f64 = scale * (1.0 + 0.5);
        let expected: f64 = [0.25f64, 5.0].iter().map(|&x2| -std::f64::consts::PI.ln() - v.ln() - x2 / v).sum();
        let got = per_frequency_loglik(&data, &theta, scale).unwrap();
        assert!((got - expected).abs() < 1e-13, "{got} vs {expected}");
    }
}

/// Dense evaluation with an explicit inverse and determinant.
fn dense_loglik(data: &Observations, theta: &MixtureParams, scale: f64) -> f64 {
    data.iter()
        .map(|x| {
            let xv = DVector::from_column_slice(x);
            let p: f64 = theta
                .components()
                .iter()
                .map(|k| {
                    let cov = covariance(k, scale);
                    let det = cov.determinant().re;
                    let quad = (xv.adjoint() * cov.try_inverse().unwrap() * &xv)[(0, 0)].re;
                    k.pi * (-quad).exp() / (std::f64::consts::PI.powi(x.len() as i32) * det)
                })
                .sum();
            p.ln()
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loglik_matches_dense_oracle(
        raw in proptest::collection::vec(-1.0f64..1.0, 12),
        sigmas in proptest::collection::vec(0.05f64..1.0, 2),
        w in 0.1f64..0.9,
        scale in prop_oneof![Just(1.0), Just(4.0)],
        seed in 0u64..500,
    ) {
        let a1 = vec![c(raw[0], raw[1]), c(raw[2], raw[3]), c(raw[4], raw[5])];
        let a2 = vec![c(raw[6], raw[7]), c(raw[8], raw[9]), c(raw[10], raw[11])];
        prop_assume!(a1.iter().chain(&a2).any(|v| v.norm() > 1e-3));
        prop_assume!(a1.iter().map(|v| v.norm_sqr()).sum::<f64>() > 1e-6 && a2.iter().map(|v| v.norm_sqr()).sum::<f64>() > 1e-6);
        let theta = MixtureParams::new(vec![
            ComponentParams::new(a1.clone(), 2.0, sigmas[0], w).unwrap(),
            ComponentParams::new(a2.clone(), 2.0, sigmas[1], 1.0 - w).unwrap(),
        ]).unwrap();
        let (data, _) = gaussian_mixture(&[(a1, sigmas[0], w), (a2, sigmas[1], 1.0 - w)], 20, seed);
        let ours = per_frequency_loglik(&data, &theta, scale).unwrap();
        let oracle = dense_loglik(&data, &theta, scale);
        prop_assert!((ours - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "{} vs {}", ours, oracle);
    }
}
