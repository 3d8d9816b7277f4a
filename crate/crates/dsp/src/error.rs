use thiserror::Error;

/// Errors produced by the signal-processing primitives.
#[derive(Error, Debug)]
pub enum DspError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid sample rate: {0}")]
    InvalidRate(String),
    #[error("sample-rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported channel layout: {0} channels (mono required)")]
    UnsupportedChannels(u16),
    #[error("WAV error: {0}")]
    Wav(#[from] hound::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DspError>;
