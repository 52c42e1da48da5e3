use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("island containing bus {bus} is unbalanced: net injection {imbalance:.3e}")]
    UnbalancedIsland { bus: usize, imbalance: f64 },

    #[error("reduced Laplacian is not positive definite")]
    Singular,

    #[error("grid is disconnected")]
    Disconnected,

    #[error("removing line {0} disconnects the network")]
    BridgeRemoval(usize),

    #[error("line {0} carries zero flow")]
    ZeroFlow(usize),

    #[error("line {0} has zero variance in the sample")]
    ZeroVariance(usize),

    #[error("conditioning subsample has {found} records, need at least {needed}")]
    InsufficientSubsample { found: usize, needed: usize },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("cluster {0} never fails in the data")]
    ClusterNeverFails(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed record: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
