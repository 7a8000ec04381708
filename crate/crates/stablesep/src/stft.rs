//! Hamming-window STFT with weighted overlap-add resynthesis.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use stablesep_core::{Complex64, FrameGeometry, Spectrogram};

use crate::error::{Error, Result};

/// Periodic Hamming window `0.54 − 0.46 cos(2πn/N)`.
pub fn hamming(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Frames needed so that each of `samples` samples is covered by
/// `N / hop` frames.
pub fn frame_count(samples: usize, geometry: &FrameGeometry) -> usize {
    samples.div_ceil(geometry.hop) + geometry.window_length / geometry.hop - 1
}

/// First sample of frame `t`, relative to the signal start.
fn frame_start(t: usize, geometry: &FrameGeometry) -> isize {
    (t * geometry.hop) as isize - (geometry.window_length - geometry.hop) as isize
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

fn check_signal(signal: &[Vec<f64>]) -> Result<usize> {
    let first = signal.first().ok_or_else(|| Error::Data("signal has no channels".into()))?;
    let len = first.len();
    if signal.iter().any(|ch| ch.len() != len) {
        return Err(Error::Data("signal channels differ in length".into()));
    }
    if signal.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("signal contains non-finite samples".into()));
    }
    Ok(len)
}

/// One-sided STFT of a `channels × samples` signal. The signal is padded
/// with `N − hop` zeros in front and as many as needed at the end.
pub fn stft(signal: &[Vec<f64>], geometry: FrameGeometry) -> Result<Spectrogram> {
    let len = check_signal(signal)?;
    let n = geometry.window_length;
    if len < n {
        return Err(Error::Data(format!("signal of {len} samples is shorter than the {n}-sample window")));
    }
    let window = hamming(n);
    let frames = frame_count(len, &geometry);
    let bins = geometry.frequencies();
    let fft = plans(n).forward;
    let mut values = vec![Complex64::new(0.0, 0.0); signal.len() * bins * frames];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (m, ch) in signal.iter().enumerate() {
        for t in 0..frames {
            let start = frame_start(t, &geometry);
            for (i, b) in buf.iter_mut().enumerate() {
                let idx = start + i as isize;
                let x = if idx >= 0 && (idx as usize) < len { ch[idx as usize] } else { 0.0 };
                *b = Complex64::new(x * window[i], 0.0);
            }
            fft.process(&mut buf);
            for (f, v) in buf[..bins].iter().enumerate() {
                values[(m * bins + f) * frames + t] = *v;
            }
        }
    }
    Ok(Spectrogram::new(values, signal.len(), frames, geometry)?)
}

/// Longest signal a spectrogram with `frames` frames can describe.
pub fn max_samples(frames: usize, geometry: &FrameGeometry) -> usize {
    (frames + 1).saturating_sub(geometry.window_length / geometry.hop) * geometry.hop
}

/// Inverse of [`stft`]: windowed inverse DFTs overlap-added and divided by
/// the summed squared window. Returns `samples` samples per channel.
pub fn istft(spec: &Spectrogram, samples: usize) -> Result<Vec<Vec<f64>>> {
    let geometry = spec.geometry();
    let n = geometry.window_length;
    let frames = spec.frames();
    if samples > max_samples(frames, &geometry) {
        return Err(Error::Data(format!(
            "{samples} samples requested from {frames} frames (at most {})",
            max_samples(frames, &geometry)
        )));
    }
    let window = hamming(n);
    let bins = geometry.frequencies();
    let ifft = plans(n).inverse;
    let mut norm = vec![0.0; samples];
    for t in 0..frames {
        let start = frame_start(t, &geometry);
        for (i, w) in window.iter().enumerate() {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < samples {
                norm[idx as usize] += w * w;
            }
        }
    }
    let mut out = vec![vec![0.0; samples]; spec.channels()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (m, ch) in out.iter_mut().enumerate() {
        for t in 0..frames {
            let start = frame_start(t, &geometry);
            if start >= samples as isize {
                break;
            }
            for f in 0..bins {
                buf[f] = spec.get(m, f, t);
            }
            for f in bins..n {
                buf[f] = buf[n - f].conj();
            }
            ifft.process(&mut buf);
            for (i, (b, w)) in buf.iter().zip(&window).enumerate() {
                let idx = start + i as isize;
                if idx >= 0 && (idx as usize) < samples {
                    ch[idx as usize] += w * b.re / n as f64;
                }
            }
        }
        for (v, d) in ch.iter_mut().zip(&norm) {
            if *d > 0.0 {
                *v /= d;
            }
        }
    }
    Ok(out)
}
