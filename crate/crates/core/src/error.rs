use thiserror::Error;

/// Errors raised by the recovery library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid index (n={n}, m={m}, mu={mu}) for band limit {n_max}")]
    InvalidIndex { n: i32, m: i32, mu: i32, n_max: u32 },

    #[error("argument outside the function domain: {0}")]
    Domain(String),

    #[error("consistency check failed: {what} (residual {residual:e})")]
    Consistency { what: &'static str, residual: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("band limit mismatch: {left} vs {right}")]
    BandLimitMismatch { left: u32, right: u32 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
