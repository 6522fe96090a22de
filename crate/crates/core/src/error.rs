use thiserror::Error;

/// Errors raised by estimation, identification and diagnostics routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },

    #[error("missing observable at row {row}, column '{column}'")]
    MissingObservable { row: usize, column: String },

    #[error("unparseable date '{value}' at row {row}")]
    BadDate { value: String, row: usize },

    #[error("unparseable value '{value}' at row {row}, column '{column}'")]
    BadValue {
        value: String,
        row: usize,
        column: String,
    },

    #[error("insufficient overlap for proxy '{label}': {count} non-missing observations (need {required})")]
    InsufficientOverlap {
        label: String,
        count: usize,
        required: usize,
    },

    #[error("collinear regressors")]
    CollinearRegressors,

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("degenerate proxy '{0}'")]
    DegenerateProxy(String),

    #[error("logarithm branch cut: rotation has an eigenvalue at -1")]
    BranchCut,

    #[error("empty sign-feasible sphere region")]
    EmptySignRegion,

    #[error("sign restrictions too tight for sampling: {accepted} admissible draws (need {required})")]
    SamplingTooTight { accepted: usize, required: usize },

    #[error("degenerate baseline: every sign-only width is zero")]
    DegenerateBaseline,

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
