use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid subset: {0}")]
    InvalidSubset(String),

    #[error("cannot draw a microphone subset from {0} channel(s); at least 2 are required")]
    CannotSubset(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient quadrature resolution: {0}")]
    InsufficientResolution(String),

    #[error("signal of {len} samples is shorter than one frame ({frame_len} samples)")]
    TooShort { len: usize, frame_len: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("weight format error: {0}")]
    WeightFormat(String),

    #[error("tensor format error: {0}")]
    TensorFormat(String),

    #[error("cannot set SNR on a zero-energy signal")]
    CannotSetSnr,

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
