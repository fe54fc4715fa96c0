use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: bad magic, expected 0x{expected:08x} found 0x{found:08x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated, expected {expected} bytes found {found}")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },

    #[error("label {label} out of range for {classes} classes at row {row}")]
    InvalidLabel {
        row: usize,
        label: usize,
        classes: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error("estimator undefined: {0}")]
    EstimatorUndefined(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code contract: 1 usage/config, 2 I/O, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Diverged { .. } => 3,
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::File { .. }
            | Error::Io(_) => 2,
            _ => 1,
        }
    }
}
