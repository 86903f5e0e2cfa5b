use alloc::string::String;

use crate::image::Shape;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid schedule configuration: {0}")]
    InvalidConfig(&'static str),

    /// The recurrence `k_{t-1}^4 a_t^2 + b_t^2 = k_t^2` has no positive `a_t^2` at step `t`.
    #[error("schedule breaks down at t={t}: k_t^2={k_sq:e} <= b_t^2={b_sq:e}, so a_t^2 would be non-positive")]
    NonPositiveSignal { t: usize, k_sq: f64, b_sq: f64 },

    #[error("timestep {t} outside the valid range {min}..={max}")]
    TimestepOutOfRange { t: usize, min: usize, max: usize },

    #[error("invalid step ordering: need 0 <= p < t, got t={t}, p={p}")]
    InvalidStepOrder { t: usize, p: usize },

    #[error("sigma^2={sigma_sq:e} exceeds the target noise variance {limit:e}")]
    SigmaTooLarge { sigma_sq: f64, limit: f64 },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: Shape, found: Shape },

    #[error("expected {expected} channels, found {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("data length {len} does not match {shape}")]
    DataLength { len: usize, shape: Shape },

    #[error("invalid dimension: {0}")]
    InvalidDimension(&'static str),

    #[error("crop window {w}x{h} at ({x},{y}) exceeds image bounds {shape}")]
    CropOutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        shape: Shape,
    },

    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    ImageTooSmall { height: usize, width: usize, window: usize },

    #[error("mean of the prediction is zero, brightness scale factor is undefined; clamp the input or skip the aligned term")]
    DegenerateMean,

    #[error("unsupported positional channel count {0} (expected 2, 4 or 10)")]
    UnsupportedPositionChannels(usize),

    #[error("unsupported pyramid factor {0} (expected 1, 2 or 4)")]
    InvalidFactor(usize),

    #[error("invalid pyramid plan: {0}")]
    InvalidPlan(&'static str),

    #[error("{height}x{width} is not divisible by pyramid factor {factor}")]
    NotDivisible { height: usize, width: usize, factor: usize },

    #[error("invalid loss configuration: {0}")]
    InvalidLossConfig(&'static str),

    #[error("denoiser failed: {0}")]
    Denoiser(String),

    #[error("feature extractor failed: {0}")]
    Extractor(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
