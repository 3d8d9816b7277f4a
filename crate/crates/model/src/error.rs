use thiserror::Error;

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("sample-rate mismatch: got {0} Hz, expected {1} Hz")]
    RateMismatch(u32, u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no training data")]
    NoData,
    #[error("missing dependency: {0}")]
    MissingDependency(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("incompatible configuration: {0}")]
    ConfigMismatch(String),
    #[error("unsupported rate: {0} Hz")]
    UnsupportedRate(u32),
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Dsp(#[from] gpse_dsp::DspError),
    #[error(transparent)]
    Plc(#[from] gpse_plc::PlcError),
    #[error(transparent)]
    Checkpoint(#[from] gpse_nn::CheckpointError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
