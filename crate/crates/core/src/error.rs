use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("shooting failed: root not bracketed in [{lo}, {hi}]")]
    ShootingBracket { lo: f64, hi: f64 },

    #[error("profile does not decay: {0}")]
    NoDecay(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("bubble under-resolved: scale {scale:.3e} < 4h = {limit:.3e}")]
    UnderResolved { scale: f64, limit: f64 },

    #[error("support escapes the box: {lost:.3e} of the L² mass would be truncated")]
    Truncation { lost: f64 },

    #[error("time {t} outside the valid range [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Jacobian near-singular (condition estimate {condition:.3e})")]
    SingularJacobian { condition: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("runs are not comparable: {0}")]
    Mismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
