use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("node {node} has insufficient history for a transition model")]
    InsufficientHistory { node: usize },

    #[error("snapshot {snapshot} has {nodes} nodes, above the betweenness cap of {cap}")]
    TooLarge { snapshot: usize, nodes: usize, cap: usize },

    #[error("cannot read {path}: {source}")]
    Input { path: std::path::PathBuf, source: std::io::Error },

    #[error("{stage} stage: {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Attaches a pipeline stage name, once.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage { stage, source: Box::new(other) },
        }
    }

    /// Whether the error stems from bad input or arguments rather than a
    /// failure inside the computation.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_input_error(),
            Error::InvalidArgument(_) | Error::Parse { .. } | Error::Input { .. } => true,
            _ => false,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
