//! Frequency-wise mixture fitting, Gaussian clustering, binary masking and
//! oracle permutation alignment.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_complex::Complex64;

use crate::clompr::{clompr_fit_detailed, FitOptions};
use crate::data::{norm_sqr, Observations};
use crate::em::{em_fit, per_frequency_loglik, EmOptions};
use crate::error::{Error, Result};
use crate::sketch::{compute_sketch, default_sketch_size, draw_frequencies};
use crate::spectrogram::Spectrogram;
use crate::stable::{ComponentParams, MixtureParams, RankOneGaussian};

/// Largest `K` accepted by [`oracle_permute`] (`K!` candidates per bin).
pub const MAX_PERMUTATION_SOURCES: usize = 8;

/// Per-frequency estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Method {
    /// EM on the Gaussian model.
    Em,
    /// EM on norm-normalized observations.
    Sawada,
    /// CL-OMPR with Gaussian atoms.
    CfGmm,
    /// CL-OMPR with α-stable atoms.
    CfAlpha,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Em, Method::Sawada, Method::CfGmm, Method::CfAlpha];

    pub fn name(self) -> &'static str {
        match self {
            Method::Em => "em",
            Method::Sawada => "sawada",
            Method::CfGmm => "cf-gmm",
            Method::CfAlpha => "cf-alpha",
        }
    }

    /// Covariance scale under which this method's parameters describe a
    /// Gaussian: 4 for characteristic-function fits, 1 for EM fits.
    pub fn cov_scale(self) -> f64 {
        match self {
            Method::Em | Method::Sawada => 1.0,
            Method::CfGmm | Method::CfAlpha => 4.0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown method {s:?}")))
    }
}

/// Settings shared by all frequency bins. The component count and seed of
/// the embedded schedules are overridden per bin.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineOptions {
    pub components: usize,
    pub seed: u64,
    /// Sketch size `J`; `None` selects [`default_sketch_size`].
    pub sketch_size: Option<usize>,
    pub em: EmOptions,
    pub clompr: FitOptions,
}

impl PipelineOptions {
    pub fn new(components: usize, seed: u64) -> Self {
        Self {
            components,
            seed,
            sketch_size: None,
            em: EmOptions::new(components),
            clompr: FitOptions::new(components),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::InvalidParams("at least one component is required".into()));
        }
        if self.sketch_size == Some(0) {
            return Err(Error::InvalidParams("sketch size must be at least 1".into()));
        }
        self.em.validate()?;
        self.clompr.validate()
    }
}

/// How a bin's parameters were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum FitStatus {
    Fitted,
    /// The `K`-component fit failed; a single component was fitted instead.
    Fallback,
    /// Both fits failed; the bin holds a unit placeholder component.
    Failed,
}

/// Parameters fitted at one frequency.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrequencyFit {
    pub index: usize,
    pub method: Method,
    pub theta: MixtureParams,
    /// Gaussian covariance scale used for clustering and likelihoods.
    pub cov_scale: f64,
    /// Whether clustering divides observations by their norm.
    pub normalize_observations: bool,
    /// Final sketch-matching objective (characteristic-function methods).
    pub objective: Option<f64>,
    /// Gaussian log-likelihood of the bin's observations under `theta`
    /// (normalized first when clustering normalizes them).
    pub loglik: f64,
    pub status: FitStatus,
    /// Message of the error that triggered a fallback.
    pub error: Option<String>,
}

/// Seed for bin `f` derived from the run seed.
pub fn frequency_seed(seed: u64, f: usize) -> u64 {
    // SplitMix64 finalizer over (seed, f).
    let mut z = seed ^ (f as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct RawFit {
    theta: MixtureParams,
    objective: Option<f64>,
}

fn fit_observations(data: &Observations, method: Method, k: usize, seed: u64, opts: &PipelineOptions) -> Result<RawFit> {
    match method {
        Method::Em | Method::Sawada => {
            let em = EmOptions {
                components: k,
                seed,
                normalize_observations: method == Method::Sawada,
                ..opts.em.clone()
            };
            Ok(RawFit {
                theta: em_fit(data, &em)?.mixture,
                objective: None,
            })
        }
        Method::CfGmm | Method::CfAlpha => {
            let j = opts.sketch_size.unwrap_or_else(|| default_sketch_size(k, data.channels()));
            let design = draw_frequencies(data, j, seed)?;
            let sketch = compute_sketch(data, &design)?;
            let mut fit_opts = FitOptions {
                components: k,
                seed,
                alpha_locked: method == Method::CfGmm,
                ..opts.clompr.clone()
            };
            if k != opts.components {
                fit_opts.n_outer_iterations = 2 * k;
            }
            let fit = clompr_fit_detailed(&sketch, &design, &fit_opts)?;
            Ok(RawFit {
                theta: fit.mixture,
                objective: Some(fit.objective),
            })
        }
    }
}

fn placeholder(channels: usize) -> MixtureParams {
    let mut a = vec![Complex64::new(0.0, 0.0); channels];
    a[0] = Complex64::new(1.0, 0.0);
    MixtureParams::new(vec![ComponentParams::new(a, 2.0, 1.0, 1.0).expect("valid placeholder")]).expect("valid placeholder")
}

/// Fits bin `f`. A failed `K`-component fit falls back to one component,
/// then to a placeholder; the status records which happened and the error
/// of the first attempt is returned alongside. Fails only on a bad index.
pub fn fit_frequency(spec: &Spectrogram, f: usize, method: Method, opts: &PipelineOptions) -> Result<(FrequencyFit, Option<Error>)> {
    let data = spec.bin(f)?;
    let seed = frequency_seed(opts.seed, f);
    let (raw, status, error) = match fit_observations(&data, method, opts.components, seed, opts) {
        Ok(raw) => (raw, FitStatus::Fitted, None),
        Err(first) => match fit_observations(&data, method, 1, seed, opts) {
            Ok(raw) => (raw, FitStatus::Fallback, Some(first)),
            Err(_) => (
                RawFit {
                    theta: placeholder(spec.channels()),
                    objective: None,
                },
                FitStatus::Failed,
                Some(first),
            ),
        },
    };
    let normalized = if method == Method::Sawada { Some(data.normalized()) } else { None };
    let scored = normalized.as_ref().filter(|d| !d.is_empty()).unwrap_or(&data);
    let loglik = per_frequency_loglik(scored, &raw.theta, method.cov_scale())?;
    let fit = FrequencyFit {
        index: f,
        method,
        theta: raw.theta,
        cov_scale: method.cov_scale(),
        normalize_observations: method == Method::Sawada,
        objective: raw.objective,
        loglik,
        status,
        error: error.as_ref().map(|e| format!("{e}")),
    };
    Ok((fit, error.map(|e| e.at_frequency(f))))
}

/// Merges per-bin results produced in any order. Fails when no bin could be
/// fitted, returning the lowest bin's error.
pub fn collect_fits(mut results: Vec<(FrequencyFit, Option<Error>)>, frequencies: usize) -> Result<Vec<FrequencyFit>> {
    results.sort_by_key(|(fit, _)| fit.index);
    if results.len() != frequencies || results.iter().enumerate().any(|(f, (fit, _))| fit.index != f) {
        return Err(Error::shape("frequency fits", frequencies, results.len()));
    }
    if results.iter().all(|(fit, _)| fit.status == FitStatus::Failed) {
        if let Some((_, Some(e))) = results.into_iter().next() {
            return Err(e);
        }
        return Err(Error::EmptyData);
    }
    Ok(results.into_iter().map(|(fit, _)| fit).collect())
}

/// Fits every frequency bin independently.
pub fn fit_all_frequencies(spec: &Spectrogram, method: Method, opts: &PipelineOptions) -> Result<Vec<FrequencyFit>> {
    opts.validate()?;
    let results = (0..spec.frequencies())
        .map(|f| fit_frequency(spec, f, method, opts))
        .collect::<Result<Vec<_>>>()?;
    collect_fits(results, spec.frequencies())
}

/// One source label per time-frequency bin, 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MaskSet {
    labels: Vec<usize>,
    sources: usize,
    frequencies: usize,
    frames: usize,
}

impl MaskSet {
    pub fn new(labels: Vec<usize>, sources: usize, frequencies: usize, frames: usize) -> Result<Self> {
        if sources == 0 {
            return Err(Error::InvalidParams("a mask set needs at least one source".into()));
        }
        if labels.len() != frequencies * frames {
            return Err(Error::shape("mask labels", frequencies * frames, labels.len()));
        }
        if labels.iter().any(|&l| l >= sources) {
            return Err(Error::InvalidParams(format!("mask label out of range for {sources} sources")));
        }
        Ok(Self {
            labels,
            sources,
            frequencies,
            frames,
        })
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    pub fn frequencies(&self) -> usize {
        self.frequencies
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn label(&self, f: usize, t: usize) -> usize {
        self.labels[f * self.frames + t]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Relabels bin `f` so that label `perm[k]` becomes `k`.
    pub fn permuted(&self, perms: &[Vec<usize>]) -> Result<MaskSet> {
        if perms.len() != self.frequencies {
            return Err(Error::shape("permutations", self.frequencies, perms.len()));
        }
        let mut labels = self.labels.clone();
        for (f, perm) in perms.iter().enumerate() {
            let inverse = inverse_permutation(perm, self.sources)?;
            for l in &mut labels[f * self.frames..(f + 1) * self.frames] {
                *l = inverse[*l];
            }
        }
        MaskSet::new(labels, self.sources, self.frequencies, self.frames)
    }
}

fn inverse_permutation(perm: &[usize], k: usize) -> Result<Vec<usize>> {
    if perm.len() != k {
        return Err(Error::shape("permutation", k, perm.len()));
    }
    let mut inverse = vec![usize::MAX; k];
    for (i, &p) in perm.iter().enumerate() {
        if p >= k || inverse[p] != usize::MAX {
            return Err(Error::InvalidParams("not a permutation".into()));
        }
        inverse[p] = i;
    }
    Ok(inverse)
}

/// Index of the largest value, the first one on ties.
fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Labels each bin with the component of highest Gaussian posterior,
/// `argmax_k log π_k + log N_c(x; 0, s (a_k a_k* + σ²_k I))`.
pub fn cluster(spec: &Spectrogram, fits: &[FrequencyFit], sources: usize) -> Result<MaskSet> {
    if fits.len() != spec.frequencies() {
        return Err(Error::shape("frequency fits", spec.frequencies(), fits.len()));
    }
    let frames = spec.frames();
    let mut labels = vec![0; spec.frequencies() * frames];
    for (f, fit) in fits.iter().enumerate() {
        if fit.theta.channels() != spec.channels() {
            return Err(Error::shape("steering vector", spec.channels(), fit.theta.channels()).at_frequency(f));
        }
        if fit.theta.len() > sources {
            return Err(Error::InvalidParams(format!("{} components exceed {sources} sources", fit.theta.len())).at_frequency(f));
        }
        let comps = fit
            .theta
            .components()
            .iter()
            .map(|c| RankOneGaussian::new(&c.a, c.sigma2, fit.cov_scale))
            .collect::<Result<Vec<_>>>()?;
        let log_pi: Vec<f64> = fit.theta.components().iter().map(|c| libm::log(c.pi)).collect();
        for t in 0..frames {
            let mut x = spec.point(f, t);
            let mut n2 = norm_sqr(&x);
            if fit.normalize_observations && n2 > 0.0 {
                let inv = 1.0 / libm::sqrt(n2);
                x.iter_mut().for_each(|v| *v *= inv);
                n2 = norm_sqr(&x);
            }
            labels[f * frames + t] = argmax(comps.iter().zip(&log_pi).map(|(c, lp)| lp + c.logpdf_with_norm(&x, n2)));
        }
    }
    MaskSet::new(labels, sources, spec.frequencies(), frames)
}

/// `ŷ_k(f, t) = 1[z(f, t) = k] x(f, t)` on every channel.
pub fn apply_masks(spec: &Spectrogram, masks: &MaskSet) -> Result<Vec<Spectrogram>> {
    if masks.frequencies() != spec.frequencies() || masks.frames() != spec.frames() {
        return Err(Error::shape("mask frames", spec.frequencies() * spec.frames(), masks.labels().len()));
    }
    let zero = Complex64::new(0.0, 0.0);
    (0..masks.sources())
        .map(|k| {
            let mut values = vec![zero; spec.as_slice().len()];
            for m in 0..spec.channels() {
                for f in 0..spec.frequencies() {
                    for t in 0..spec.frames() {
                        if masks.label(f, t) == k {
                            let i = spec.index(m, f, t);
                            values[i] = spec.as_slice()[i];
                        }
                    }
                }
            }
            spec.with_values(values)
        })
        .collect()
}

/// All permutations of `0..k` in Heap's order (starting with the identity).
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..k).collect();
    let mut out = vec![current.clone()];
    let mut c = vec![0; k];
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                current.swap(0, i);
            } else {
                current.swap(c[i], i);
            }
            out.push(current.clone());
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

fn check_images(images: &[Spectrogram], what: &'static str) -> Result<()> {
    let first = images.first().ok_or(Error::EmptyData)?;
    if images.iter().any(|s| !s.same_shape(first)) {
        return Err(Error::InvalidParams(format!("{what} differ in shape")));
    }
    Ok(())
}

/// Per-frequency relabeling of `estimates` minimizing the squared error to
/// `truth`. Returns `perms[f]` (aligned source `k` is estimate `perms[f][k]`)
/// and the realigned estimates. Ties keep the earliest permutation in
/// [`permutations`] order.
pub fn oracle_permute(estimates: &[Spectrogram], truth: &[Spectrogram]) -> Result<(Vec<Vec<usize>>, Vec<Spectrogram>)> {
    let k = truth.len();
    if estimates.len() != k {
        return Err(Error::shape("estimated images", k, estimates.len()));
    }
    if k > MAX_PERMUTATION_SOURCES {
        return Err(Error::InvalidParams(format!(
            "oracle permutation over {k} sources is refused (limit {MAX_PERMUTATION_SOURCES})"
        )));
    }
    check_images(truth, "true images")?;
    check_images(estimates, "estimated images")?;
    if !estimates[0].same_shape(&truth[0]) {
        return Err(Error::InvalidParams("estimated and true images differ in shape".into()));
    }
    let shape = &truth[0];
    let candidates = permutations(k);
    let mut perms = Vec::with_capacity(shape.frequencies());
    let mut cost = vec![0.0; k * k];
    for f in 0..shape.frequencies() {
        // cost[j * k + i]: error of estimate j against truth i.
        for j in 0..k {
            for i in 0..k {
                let mut e = 0.0;
                for m in 0..shape.channels() {
                    for (a, b) in estimates[j].row(m, f).iter().zip(truth[i].row(m, f)) {
                        e += (a - b).norm_sqr();
                    }
                }
                cost[j * k + i] = e;
            }
        }
        let best = argmax(candidates.iter().map(|p| -(0..k).map(|i| cost[p[i] * k + i]).sum::<f64>()));
        perms.push(candidates[best].clone());
    }
    let aligned = apply_permutations(estimates, &perms)?;
    Ok((perms, aligned))
}

/// Rebuilds images so that aligned source `k` at bin `f` is
/// `images[perms[f][k]]`.
pub fn apply_permutations(images: &[Spectrogram], perms: &[Vec<usize>]) -> Result<Vec<Spectrogram>> {
    check_images(images, "images")?;
    let shape = &images[0];
    let k = images.len();
    if perms.len() != shape.frequencies() {
        return Err(Error::shape("permutations", shape.frequencies(), perms.len()));
    }
    for p in perms {
        inverse_permutation(p, k)?;
    }
    (0..k)
        .map(|target| {
            let mut values = vec![Complex64::new(0.0, 0.0); shape.as_slice().len()];
            for m in 0..shape.channels() {
                for (f, perm) in perms.iter().enumerate() {
                    let start = shape.index(m, f, 0);
                    values[start..start + shape.frames()].copy_from_slice(images[perm[target]].row(m, f));
                }
            }
            shape.with_values(values)
        })
        .collect()
}

/// Ideal binary mask: the source with the most energy in each bin, the
/// first one on ties.
pub fn oracle_mask(truth: &[Spectrogram]) -> Result<MaskSet> {
    check_images(truth, "true images")?;
    let shape = &truth[0];
    let mut labels = Vec::with_capacity(shape.frequencies() * shape.frames());
    for f in 0..shape.frequencies() {
        for t in 0..shape.frames() {
            labels.push(argmax(
                truth.iter().map(|s| (0..s.channels()).map(|m| s.get(m, f, t).norm_sqr()).sum::<f64>()),
            ));
        }
    }
    MaskSet::new(labels, truth.len(), shape.frequencies(), shape.frames())
}

/// Steering vectors realigned by per-frequency permutations:
/// `out[k][f] = θ_f.components[perms[f][k]].a`, or `None` when the bin's fit
/// has fewer components.
pub fn aligned_steering(fits: &[FrequencyFit], perms: &[Vec<usize>], sources: usize) -> Result<Vec<Vec<Option<Vec<Complex64>>>>> {
    if fits.len() != perms.len() {
        return Err(Error::shape("permutations", fits.len(), perms.len()));
    }
    Ok((0..sources)
        .map(|k| {
            fits.iter()
                .zip(perms)
                .map(|(fit, perm)| fit.theta.components().get(perm[k]).map(|c| c.a.clone()))
                .collect()
        })
        .collect())
}
