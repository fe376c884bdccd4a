use thiserror::Error;

/// Errors produced by the assembly, solver and optimization layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("{solver} failed to converge: {detail}")]
    Convergence { solver: &'static str, detail: String },

    #[error("closed-loop simulation blew up at t = {time}")]
    Unstable { time: f64 },

    #[error("topological sensitivity vanishes identically")]
    DegenerateSensitivity,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("probe point lies {0} from the actuator boundary, closer than one cell")]
    NearInterface(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
