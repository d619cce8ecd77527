use thiserror::Error;

/// Errors raised by the numerical scheme and its analysis helpers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("support cannot shrink: {side} endpoint {new} < {old}")]
    SupportShrink {
        side: &'static str,
        old: f64,
        new: f64,
    },

    #[error("target support [{target_left}, {target_right}] does not contain [{source_left}, {source_right}]")]
    SupportNotContained {
        source_left: f64,
        source_right: f64,
        target_left: f64,
        target_right: f64,
    },

    #[error("nodal value {value} at node {index} is negative or not finite")]
    InvalidValue { index: usize, value: f64 },

    #[error("expected {expected} nodal values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("time step {dt} violates the stability bound {max}")]
    CflViolation { dt: f64, max: f64 },

    #[error("front moved by more than one node in a single step")]
    FrontJump,

    #[error("existence condition fails: m q dt |u|^q = {value} >= 1")]
    ExistenceViolated { value: f64 },

    #[error("time step {dt:e} fell below the floor {floor:e}")]
    StepFloor { dt: f64, floor: f64 },

    #[error("zero pivot at row {row}")]
    ZeroPivot { row: usize },

    #[error("p = {p} is outside the admissible range (1, m + 1) = (1, {upper})")]
    Regime { p: f64, upper: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("subsolution is only defined for t < T (t = {t}, T = {blowup})")]
    SubsolutionExpired { t: f64, blowup: f64 },

    #[error("mesh too coarse for the subsolution: delta = {delta} >= 1")]
    MeshTooCoarse { delta: f64 },

    #[error("field is identically zero")]
    ZeroField,

    #[error("monitor violation at step {step}: {detail}")]
    Monitor { step: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, SchemeError>;
