use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions {height}x{width}")]
    InvalidDimensions { height: usize, width: usize },
    #[error("shape mismatch: expected {expected_h}x{expected_w}, got {got_h}x{got_w}")]
    ShapeMismatch {
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },
    #[error("spectrum layout mismatch: expected {expected}")]
    LayoutMismatch { expected: &'static str },
    #[error("band index {index} out of range for {n_bands} bands")]
    BandOutOfRange { index: usize, n_bands: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("mask geometry does not match the image: {0}")]
    GeometryMismatch(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("crop target {target_h}x{target_w} exceeds field size {height}x{width}")]
    CropTooLarge {
        target_h: usize,
        target_w: usize,
        height: usize,
        width: usize,
    },
    #[error("activation cache is stale: {0}")]
    StaleCache(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("classification head is not configured")]
    NoClassHead,
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("empty confusion matrix")]
    EmptyConfusion,
    #[error("image source: {0}")]
    Source(String),
}
