use shiptrack_core::rpc::ApiError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] shiptrack_core::Error),
    #[error(transparent)]
    Api(#[from] ApiError),
    #[error("bootnode {endpoint}: {reason}")]
    Bootnode { endpoint: String, reason: String },
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("protocol: {0}")]
    Protocol(String),
}

pub type RuntimeResult<T> = std::result::Result<T, RuntimeError>;
