use std::path::PathBuf;

/// Errors shared by every module in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {layer} layer: {reason}")]
    InvalidLayer { layer: &'static str, reason: String },

    #[error("link ({i}, {j}) is not a positive symmetric pair in both layers")]
    AsymmetricLink { i: usize, j: usize },

    #[error("removing link ({i}, {j}) leaves a layer that is not strongly connected")]
    ConnectivityLost { i: usize, j: usize },

    #[error("switching signal is undefined at step {step}")]
    ScheduleExhausted { step: u64 },

    #[error("snapshot index {index} out of range: schedule holds {count} snapshots")]
    SnapshotOutOfRange { index: usize, count: usize },

    #[error("{near_zero} eigenvalues within {tol:e} of zero; expected exactly one (not strongly connected?)")]
    NotStronglyConnected { near_zero: usize, tol: f64 },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("eigenvalue iteration did not converge for a {rows}x{cols} matrix; offending matrix dumped to {dump}")]
    EigenNonConvergence {
        rows: usize,
        cols: usize,
        dump: PathBuf,
    },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("state diverged at step {step}")]
    Diverged { step: u64 },

    #[error("no convergence after {iterations} iterations")]
    TimedOut { iterations: u64 },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
