use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("domain error in {op} at index {index}: value {value}")]
    Domain {
        op: &'static str,
        index: usize,
        value: f64,
    },

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("kind mismatch: {0}")]
    KindMismatch(String),

    #[error("no Beta parameters reach the target (best a={a}, b={b}, residual mse={residual:e})")]
    Infeasible { a: f64, b: f64, residual: f64 },

    #[error(
        "non-finite loss at step {step} (categorical={categorical}, summary={summary}, kl={kl})"
    )]
    NonFinite {
        step: usize,
        categorical: f64,
        summary: f64,
        kl: f64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad inputs or configuration rather than a
    /// numerical or I/O failure at runtime.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::Config(_)
                | Error::KindMismatch(_)
                | Error::Dimension { .. }
                | Error::Contract(_)
        )
    }
}
