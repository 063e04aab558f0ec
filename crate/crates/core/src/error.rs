use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value in {what} at cell {cell}")]
    NonFinite { what: &'static str, cell: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A pointwise function was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("time step underflow (dt = {dt:e}): vacuum/blow-up suspected")]
    DtUnderflow { dt: f64 },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("audit: {0}")]
    Audit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
