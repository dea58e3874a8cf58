use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension n = {n} is not supported (need n >= {min})")]
    DimensionUnsupported { n: usize, min: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("sampling failure: non-finite integrand value {value} at point {point}")]
    SamplingFailure { point: String, value: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("resource guard: dim P^{{{p},{q}}} = {size} exceeds bound {bound} (n = {n})")]
    ResourceGuard {
        n: usize,
        p: u32,
        q: u32,
        size: usize,
        bound: usize,
    },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("underdetermined data: {got} sample points, need at least {need}")]
    Underdetermined { got: usize, need: usize },

    #[error("sample-set frame functions cannot be evaluated at arbitrary points")]
    UnsupportedEvaluation,

    #[error("operator is not Hermitian (deviation {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("reconstruction routes disagree: {0}")]
    Disagreement(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_dimension(n: usize) -> Result<()> {
    if n < 3 {
        Err(Error::DimensionUnsupported { n, min: 3 })
    } else {
        Ok(())
    }
}

pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Error {
    Error::Shape {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
