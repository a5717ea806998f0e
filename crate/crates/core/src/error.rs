use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid property: {0}")]
    InvalidProperty(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("invalid well definition: {0}")]
    Well(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("hierarchy error: {0}")]
    Hierarchy(String),

    #[error("singular local block in static condensation (block {block})")]
    SingularBlock { block: usize },

    #[error("linear solver failed: {0}")]
    LinearSolver(String),

    #[error("nonlinear solver failed: {0}")]
    Nonlinear(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("failed to parse {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
