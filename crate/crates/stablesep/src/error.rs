use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {chunk} chunk: {message}")]
    Wav {
        path: PathBuf,
        chunk: &'static str,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] stablesep_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration errors, 3 for data errors, 4 for numerical
    /// failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Core(e) => core_exit_code(e),
            _ => 3,
        }
    }
}

fn core_exit_code(e: &stablesep_core::Error) -> u8 {
    use stablesep_core::Error as E;
    match e {
        E::Numerical(_) => 4,
        E::InvalidParams(_) | E::Domain { .. } => 2,
        E::AtFrequency { source, .. } => core_exit_code(source),
        _ => 3,
    }
}
