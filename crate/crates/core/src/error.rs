use thiserror::Error;

/// Crate-wide error type. Symbolic operations are exact, so every failure
/// is structural: bad axes, mismatched dimensions, violated preconditions,
/// or resource guards tripping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("exponent cap {cap} exceeded (would reach {reached}); runaway expansion")]
    ExponentCap { cap: u16, reached: u64 },

    #[error("expected a real-valued expression, found a {found} one")]
    NotRealValued { found: &'static str },

    #[error("expected an imaginary-valued expression, found a {found} one")]
    NotImaginaryValued { found: &'static str },

    #[error("structure coefficients required but not supplied")]
    MissingStructureCoeffs,

    #[error("field index {index} out of range (system has {count} fields)")]
    FieldIndexOutOfRange { index: usize, count: usize },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("weight overflow guard tripped: max |lambda*f| = {max_abs:.3e} exceeds {limit}")]
    WeightOverflow { max_abs: f64, limit: f64 },

    #[error("hypothesis check failed: {0}")]
    HypothesisFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty test-function family")]
    EmptyFamily,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
