use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("topology error: {0}")]
    Topology(String),
    #[error("unknown node set `{0}`")]
    UnknownSet(String),
    #[error("element {element} is degenerate (det J = {det:e})")]
    DegenerateElement { element: usize, det: f64 },
    #[error("invalid material: E = {e}, nu = {nu}")]
    InvalidMaterial { e: f64, nu: f64 },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("stale tape: {0}")]
    StaleTape(String),
    #[error("ill-conditioned basis (condition estimate {0:e})")]
    IllConditioned(f64),
    #[error("non-finite loss at sample {sample}")]
    NonFiniteLoss { sample: u64 },
    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),
    #[error("operation requires a structured grid")]
    UnstructuredMesh,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
