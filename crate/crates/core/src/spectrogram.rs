//! Multichannel one-sided short-time Fourier coefficients.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::data::Observations;
use crate::error::{Error, Result};

/// STFT frame geometry shared by every spectrogram of one signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameGeometry {
    pub sample_rate: u32,
    pub window_length: usize,
    pub hop: usize,
}

impl FrameGeometry {
    pub fn new(sample_rate: u32, window_length: usize, hop: usize) -> Result<Self> {
        if window_length < 2 || window_length % 2 != 0 {
            return Err(Error::InvalidParams("window length must be even and at least 2".into()));
        }
        if hop == 0 || window_length % hop != 0 {
            return Err(Error::InvalidParams("hop must divide the window length".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidParams("sample rate must be positive".into()));
        }
        Ok(Self {
            sample_rate,
            window_length,
            hop,
        })
    }

    /// `F = N/2 + 1`.
    pub fn frequencies(&self) -> usize {
        self.window_length / 2 + 1
    }
}

/// Complex coefficients `x_m(f, t)` stored channel-major, then frequency,
/// then frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Vec<Complex64>,
    channels: usize,
    frames: usize,
    geometry: FrameGeometry,
}

impl Spectrogram {
    pub fn new(values: Vec<Complex64>, channels: usize, frames: usize, geometry: FrameGeometry) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParams("a spectrogram needs at least one channel".into()));
        }
        let expected = channels * geometry.frequencies() * frames;
        if values.len() != expected {
            return Err(Error::shape("spectrogram values", expected, values.len()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParams("spectrogram values must be finite".into()));
        }
        Ok(Self {
            values,
            channels,
            frames,
            geometry,
        })
    }

    pub fn zeros(channels: usize, frames: usize, geometry: FrameGeometry) -> Result<Self> {
        Self::new(
            vec![Complex64::new(0.0, 0.0); channels * geometry.frequencies() * frames],
            channels,
            frames,
            geometry,
        )
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frequencies(&self) -> usize {
        self.geometry.frequencies()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.geometry
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    #[inline]
    pub fn index(&self, m: usize, f: usize, t: usize) -> usize {
        (m * self.frequencies() + f) * self.frames + t
    }

    #[inline]
    pub fn get(&self, m: usize, f: usize, t: usize) -> Complex64 {
        self.values[self.index(m, f, t)]
    }

    /// Frames of channel `m` at frequency `f`.
    pub fn row(&self, m: usize, f: usize) -> &[Complex64] {
        let start = self.index(m, f, 0);
        &self.values[start..start + self.frames]
    }

    /// `x(f, t)` across channels.
    pub fn point(&self, f: usize, t: usize) -> Vec<Complex64> {
        (0..self.channels).map(|m| self.get(m, f, t)).collect()
    }

    /// The `T` observations `x(f, ·)` at one frequency.
    pub fn bin(&self, f: usize) -> Result<Observations> {
        if f >= self.frequencies() {
            return Err(Error::shape("frequency index", self.frequencies(), f));
        }
        let mut values = Vec::with_capacity(self.channels * self.frames);
        for t in 0..self.frames {
            values.extend((0..self.channels).map(|m| self.get(m, f, t)));
        }
        Observations::new(values, self.channels)
    }

    /// Same geometry, new coefficients.
    pub fn with_values(&self, values: Vec<Complex64>) -> Result<Self> {
        Self::new(values, self.channels, self.frames, self.geometry)
    }

    pub fn same_shape(&self, other: &Spectrogram) -> bool {
        self.channels == other.channels && self.frames == other.frames && self.geometry == other.geometry
    }
}
