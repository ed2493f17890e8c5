use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate trial_id `{0}`")]
    DuplicateTrial(String),

    #[error("{path}: expected {expected} bytes ({n_channels} x {n_samples} f32), found {found}")]
    ByteLengthMismatch {
        path: PathBuf,
        n_channels: usize,
        n_samples: usize,
        expected: u64,
        found: u64,
    },

    #[error("trial `{trial_id}`: non-finite sample at channel {channel}, index {index}")]
    NonFinite {
        trial_id: String,
        channel: usize,
        index: usize,
    },

    #[error("trial `{trial_id}`: duration {duration_s:.3} s is shorter than the {min_s} s minimum")]
    TooShort {
        trial_id: String,
        duration_s: f64,
        min_s: f64,
    },

    #[error("{what} of {value} Hz must be below Nyquist ({nyquist} Hz)")]
    AboveNyquist {
        what: &'static str,
        value: f64,
        nyquist: f64,
    },

    #[error("trial too short for spectral estimation: {n_samples} samples give {segments} segment(s) of {segment_len}, need at least 2")]
    TooFewSegments {
        n_samples: usize,
        segment_len: usize,
        segments: usize,
    },

    #[error("band `{0}` contains no frequency bins")]
    EmptyBand(String),

    #[error("channel {channel} has zero power in band `{band}`")]
    ZeroPower { channel: usize, band: String },

    #[error("eigensolver did not converge ({0})")]
    EigenNoConvergence(String),

    #[error("rank {0} has zero variance across trials")]
    ZeroVarianceRank(usize),

    #[error("{0}")]
    SingleClass(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance is not positive-definite after ridge {ridge:e}")]
    NotPositiveDefinite { ridge: f64 },

    #[error("missing cell(s): {0}")]
    MissingCell(String),

    #[error("config: {0}")]
    Config(String),

    #[error("model container: {0}")]
    Container(String),

    #[error("trial `{trial_id}`: {source}")]
    InTrial {
        trial_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure came from the filesystem rather than from the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::InTrial { source, .. } => source.is_io(),
            _ => false,
        }
    }

    pub(crate) fn in_trial(self, trial_id: &str) -> Self {
        Error::InTrial {
            trial_id: trial_id.to_string(),
            source: Box::new(self),
        }
    }
}
