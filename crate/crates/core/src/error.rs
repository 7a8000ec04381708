use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by the estimation and separation primitives.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A scalar argument lies outside its mathematical domain.
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    /// Two containers that must agree in length do not.
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("empty data")]
    EmptyData,
    #[error("degenerate data scale")]
    DegenerateScale,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// An error raised while processing one frequency bin.
    #[error("frequency {index}: {source}")]
    AtFrequency { index: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain { name, value, domain }
    }

    pub(crate) fn shape(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Shape { what, expected, got }
    }

    pub(crate) fn at_frequency(self, index: usize) -> Self {
        Error::AtFrequency {
            index,
            source: Box::new(self),
        }
    }

    /// True for errors caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) => true,
            Error::AtFrequency { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
