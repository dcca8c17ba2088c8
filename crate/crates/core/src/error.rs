use std::path::PathBuf;

/// Errors produced by the estimation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The least-squares estimators require every record to share one
    /// sample size; heterogeneous sizes must go through the EM route.
    #[error(
        "mixed sample sizes (found {found}, expected {expected}): the least-squares route \
         requires equal n for all users; use the EM route for adaptive samples"
    )]
    MixedSampleSizes { expected: usize, found: usize },

    /// Two vectors that must be conformable were not.
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    /// The normal-equations system could not be factored even after the
    /// ridge retry.
    #[error("singular system: {diagnostics}")]
    SingularSystem { diagnostics: String },

    /// An observation has zero likelihood under every mixture component.
    #[error("observation (r={sampled_rank}, n={sample_size}) has zero likelihood under every rank")]
    EmptyLikelihood { sampled_rank: usize, sample_size: usize },

    /// A sample record's size does not belong to the adaptive doubling
    /// schedule it is being analyzed against.
    #[error("sample size {observed} is not on the doubling schedule {schedule:?}")]
    ScheduleMismatch { observed: usize, schedule: Vec<usize> },

    /// The requested estimator cannot run on the configured sampler.
    #[error("estimator `{estimator}` is incompatible with sampler `{sampler}`: {reason}")]
    IncompatibleEstimator {
        estimator: String,
        sampler: String,
        reason: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed row in one of the CSV interchange files.
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
