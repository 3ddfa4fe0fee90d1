use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the simulator, the learned autoscaler and the
/// experiment plumbing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid application: {0}")]
    InvalidApp(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trace {path}: line {line}: {msg}")]
    TraceParse { path: PathBuf, line: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("inconsistent graph: {0}")]
    Graph(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("placement failed: no capacity for {demand} vCPUs")]
    Placement { demand: u32 },

    #[error("training error: {0}")]
    Training(String),

    #[error("parameter file: {0}")]
    Params(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
