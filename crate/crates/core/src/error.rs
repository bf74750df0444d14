use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("joint {joint} at {value:.6} rad is outside [{min:.6}, {max:.6}]")]
    JointLimit {
        joint: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("unknown tool point `{0}`")]
    UnknownToolPoint(String),

    #[error("matrix is not a proper rotation (orthonormality error {0:.3e})")]
    NotOrthonormal(f64),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("unsupported chain topology: {0}")]
    UnsupportedTopology(String),

    #[error("target unreachable: wrist center at {distance:.6} mm, reach {reach:.6} mm")]
    Unreachable { distance: f64, reach: f64 },

    #[error("degenerate pose: sensor-facing axis is parallel to base Z")]
    DegeneratePose,

    #[error("points are collinear (triangle area {0:.3e} mm^2)")]
    Collinear(f64),

    #[error("noise scale must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
