use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} = {value} outside admissible range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("point ({x:.6}, {y:.6}, {z:.6}) lies outside the helix cylinder")]
    OutsideCylinder { x: f64, y: f64, z: f64 },

    #[error("PI-interval [{beta1:.6}, {beta2:.6}] exceeds scan range [-{beta_max:.6}, {beta_max:.6}]")]
    PiIntervalOutOfScan {
        beta1: f64,
        beta2: f64,
        beta_max: f64,
    },

    #[error("quadrature did not converge: relative change {change:.3e} exceeds {tol:.1e}")]
    Quadrature { change: f64, tol: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("incommensurate geometry: {0}")]
    Incommensurate(String),

    #[error("insufficient detector coverage: {0}")]
    DetectorCoverage(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("malformed {kind} data: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
