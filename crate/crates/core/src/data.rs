//! Point clouds in `C^M`.

use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// `T` observations `x_t ∈ C^M`, stored point-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    values: Vec<Complex64>,
    channels: usize,
}

impl Observations {
    pub fn new(values: Vec<Complex64>, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParams("observations need at least one channel".into()));
        }
        if values.len() % channels != 0 {
            return Err(Error::shape(
                "observation buffer",
                values.len().next_multiple_of(channels),
                values.len(),
            ));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParams("observations must be finite".into()));
        }
        Ok(Self { values, channels })
    }

    pub fn from_points(points: &[Vec<Complex64>]) -> Result<Self> {
        let channels = points.first().map(Vec::len).ok_or(Error::EmptyData)?;
        let mut values = Vec::with_capacity(points.len() * channels);
        for p in points {
            if p.len() != channels {
                return Err(Error::shape("observation", channels, p.len()));
            }
            values.extend_from_slice(p);
        }
        Self::new(values, channels)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, t: usize) -> &[Complex64] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[Complex64]> + '_ {
        self.values.chunks_exact(self.channels)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    /// Concatenates two clouds with the same channel count.
    pub fn concat(&self, other: &Observations) -> Result<Observations> {
        if self.channels != other.channels {
            return Err(Error::shape("channels", self.channels, other.channels));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Observations { values, channels: self.channels })
    }

    /// Each point divided by its Euclidean norm; zero points are dropped.
    pub fn normalized(&self) -> Observations {
        let mut values = Vec::with_capacity(self.values.len());
        for p in self.iter() {
            let n2 = norm_sqr(p);
            if n2 > 0.0 {
                let inv = 1.0 / libm::sqrt(n2);
                values.extend(p.iter().map(|v| v * inv));
            }
        }
        Observations { values, channels: self.channels }
    }
}

pub(crate) fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// `a* b` (conjugate-linear in the first argument).
pub(crate) fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
