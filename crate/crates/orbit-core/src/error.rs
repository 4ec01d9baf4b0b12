use thiserror::Error;

/// Errors raised by the library. The CLI maps the variants onto exit codes.
#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("size error: expected {expected}, got {got}")]
    Size { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The model lies outside the hypotheses under which dimensions are known.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("no clear singular-value gap: {0}")]
    NoGap(String),

    #[error("search exhausted: {0}")]
    SearchExhausted(String),

    #[error("quadrature solve failed (residual {residual:e}): {msg}")]
    Solver { residual: f64, msg: String },

    #[error("insufficient quadrature degree: need {need}, rule has {have}")]
    RuleDegree { need: usize, have: usize },

    #[error("non-finite value at sample {index}: {msg}")]
    NonFinite { index: usize, msg: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, OrbitError>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(OrbitError::Size { expected, got });
    }
    Ok(())
}
