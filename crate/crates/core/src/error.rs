use thiserror::Error;

pub type Result<T> = std::result::Result<T, DagError>;

#[derive(Debug, Error)]
pub enum DagError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("numeric error in {op}: {msg}")]
    Numeric { op: &'static str, msg: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid patch geometry: {0}")]
    Geometry(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("resource exhausted: {0}")]
    ResourceExhausted(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl DagError {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        DagError::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        DagError::Contract(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        DagError::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            DagError::Dimension { .. } => "dimension",
            DagError::Numeric { .. } => "numeric",
            DagError::Contract(_) => "contract",
            DagError::Geometry(_) => "geometry",
            DagError::Parse { .. } => "parse",
            DagError::Spec(_) => "spec",
            DagError::Config { .. } => "config",
            DagError::Checkpoint(_) => "checkpoint",
            DagError::ResourceExhausted(_) => "resource",
            DagError::Io(_) => "io",
        }
    }
}
