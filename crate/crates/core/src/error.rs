use thiserror::Error;

#[derive(Debug, Error)]
pub enum QcmdError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid of {requested} points exceeds the cap of {cap} points")]
    ResolutionTooFine { requested: usize, cap: usize },

    #[error("grid of {n_points} points is too coarse for h = {h}: need at least {required}")]
    GridTooCoarse {
        n_points: usize,
        h: f64,
        required: usize,
    },

    #[error("time step {dt} does not divide final time {t_final}")]
    IncommensurateStep { dt: f64, t_final: f64 },

    #[error("wavefunction mass {mass} deviates from 1 by more than {tolerance}")]
    NotNormalized { mass: f64, tolerance: f64 },

    #[error("boundary density {density:e} exceeds {threshold:e}; the packet reaches the periodic boundary")]
    BoundaryMass { density: f64, threshold: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownName {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("observable `{0}` is not Schwartz-class; the phase-space integral path needs decay")]
    NotSchwartz(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QcmdError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> QcmdError {
    QcmdError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
