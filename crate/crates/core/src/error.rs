use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("sparsity pattern differs from the one the symbolic analysis was built for")]
    PatternMismatch,

    #[error("input locations are collinear")]
    CollinearInput,

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("point ({x}, {y}) lies outside the mesh")]
    PointOutsideMesh { x: f64, y: f64 },

    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),

    #[error("{name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("autocorrelation {0} outside (-1, 1)")]
    PhiOutOfRange(f64),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("no usable seasonal data for cell ({lon}, {lat})")]
    EmptySeason { lon: f64, lat: f64 },

    #[error("cell ({lon}, {lat}) has zero variance")]
    ZeroVariance { lon: f64, lat: f64 },

    #[error("standardization constants missing for cell ({lon}, {lat})")]
    MissingConstants { lon: f64, lat: f64 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("input file missing: {}", .0.display())]
    InputMissing(PathBuf),

    #[error("malformed input {}: {message}", path.display())]
    InputMalformed { path: PathBuf, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::ConfigInvalid(_) => ErrorKind::Config,
            Error::InputMissing(_)
            | Error::InputMalformed { .. }
            | Error::Io { .. }
            | Error::EmptySeason { .. }
            | Error::ZeroVariance { .. }
            | Error::MissingConstants { .. } => ErrorKind::Input,
            _ => ErrorKind::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::InputMissing(path)
        } else {
            Error::Io { path, source }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Input,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Input => 3,
            ErrorKind::Numeric => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Input => "input",
            ErrorKind::Numeric => "numeric",
        }
    }
}
