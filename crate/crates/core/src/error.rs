use std::path::PathBuf;

/// Broad classification of a failure, used by front-ends to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The caller asked for something inconsistent (bad flags, unknown layer, ...).
    Config,
    /// The data on disk or in memory violates the format or its invariants.
    Data,
    /// A numerical routine could not produce a trustworthy result.
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, found {found}")]
    Shape {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error(
        "matrix is not positive semi-definite: eigenvalue {eigenvalue:e} below -{tolerance:e}"
    )]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("linear system is singular or numerically rank deficient")]
    Singular,

    #[error("Hebb rule diverged at step {step} (max |W| = {max_abs:e}); reduce the learning rate")]
    Divergence { step: usize, max_abs: f64 },

    #[error("training diverged in epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown layer {requested:?}; available layers: {available:?}")]
    UnknownLayer {
        requested: String,
        available: Vec<String>,
    },

    #[error("episode needs {required} classes but the feature set has only {available}")]
    InsufficientClasses { required: usize, available: usize },

    #[error("class {class} ({name}) has {available} samples but the episode needs {required}")]
    InsufficientSamples {
        class: usize,
        name: String,
        available: usize,
        required: usize,
    },

    #[error("invalid feature data: {0}")]
    InvalidData(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: truncated file, expected {expected} bytes but found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::UnknownLayer { .. } => ErrorKind::Config,
            Error::NotSymmetric { .. }
            | Error::NotPsd { .. }
            | Error::Singular
            | Error::Divergence { .. }
            | Error::TrainingDiverged { .. } => ErrorKind::Numerical,
            Error::Episode { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn shape(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
