use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operator is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("{n_qubits} qubits exceeds the limit of {limit} for this operation")]
    ResourceGuard { n_qubits: usize, limit: usize },
    #[error("amplitude {value} outside [-1, 1] in channel {channel}")]
    AmplitudeOutOfRange { channel: usize, value: f64 },
    #[error("eigensolver breakdown at slot {0}")]
    Eigensolve(usize),
    #[error("protocol {protocol} not applicable: {reason}")]
    Protocol { protocol: String, reason: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
