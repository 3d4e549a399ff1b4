use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error at line {line}, column {column}: {message}")]
    Format {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    /// The smooth max divergence tail never drops to the smoothing level on the
    /// scanned grid. Carries the `(gamma, tail)` curve that was evaluated.
    #[error("no finite value: tail at grid ceiling is {tail_at_ceiling:e} > eps {eps:e}")]
    NoFiniteValue {
        eps: f64,
        tail_at_ceiling: f64,
        curve: Vec<(f64, f64)>,
    },

    #[error("missing label: {0}")]
    Key(String),

    #[error("expurgation failed: no codebook out of {trials} met both thresholds (mean error {mean_error:e}, mean leakage {mean_leakage:e})")]
    ExpurgationFailed {
        trials: usize,
        mean_error: f64,
        mean_leakage: f64,
    },

    #[error("degenerate epsilon {eps:e}: covering constants are undefined at zero")]
    DegenerateEpsilon { eps: f64 },

    #[error("band {0} is empty")]
    EmptyBand(usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
