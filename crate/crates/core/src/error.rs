use thiserror::Error;

/// Errors raised by the geometry, rig, raster, and gradient modules.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("degenerate transform: |w| = {w:.3e} below 1e-12")]
    DegenerateTransform { w: f64 },

    #[error("invalid rig: {0}")]
    InvalidRig(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid shading: {0}")]
    InvalidShading(String),

    #[error("forward cache does not match the requested differentiation inputs: {0}")]
    CacheMismatch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type CoreResult<T> = Result<T, CoreError>;
