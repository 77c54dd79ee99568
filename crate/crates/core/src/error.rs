use crate::transport::TransportError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid label {0}: expected -1 or +1")]
    Label(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("protocol order violation: {0}")]
    ProtocolOrder(String),

    #[error("transport failure at iteration {iteration}: {source}")]
    Transport {
        iteration: usize,
        #[source]
        source: TransportError,
    },

    #[error(
        "training diverged at iteration {iteration} (loss = {loss}); try a smaller learning rate"
    )]
    Divergence { iteration: usize, loss: f64 },

    #[error("load error: {0}")]
    Load(String),

    #[error("encode error: column `{column}` has unseen value `{value}`")]
    Encode { column: String, value: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("harness error: {0}")]
    Harness(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn transport(iteration: usize, source: TransportError) -> Self {
        Error::Transport { iteration, source }
    }
}
