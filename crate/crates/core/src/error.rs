use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by how the CLI maps them to exit codes: parameter
/// and configuration problems, data/I-O problems, and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates an operation precondition.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A vertex pair does not form an edge of the planning graph.
    #[error("graph error: {0}")]
    Graph(String),

    /// Bad experiment configuration (missing models, inconsistent methods).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data (rasters, manifests, logits).
    #[error("data error: {0}")]
    Data(String),

    /// GP fit failed for a class even after jitter escalation.
    #[error("gp fit failed for class {class}: {reason}")]
    Fit { class: u16, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub fn graph(msg: impl Into<String>) -> Self {
        Error::Graph(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
