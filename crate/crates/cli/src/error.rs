use thiserror::Error;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing dependency: {0}")]
    MissingDependency(String),
    #[error("incompatible checkpoints: {0}")]
    ConfigMismatch(String),
    #[error("unsupported rate: {0} Hz")]
    UnsupportedRate(u32),
    #[error(transparent)]
    Model(#[from] gpse_model::ModelError),
    #[error(transparent)]
    Dsp(#[from] gpse_dsp::DspError),
    #[error(transparent)]
    Plc(#[from] gpse_plc::PlcError),
    #[error(transparent)]
    Degrade(#[from] gpse_degrade::DegradeError),
    #[error(transparent)]
    Curation(#[from] gpse_curation::CurationError),
    #[error(transparent)]
    Eval(#[from] gpse_evalkit::EvalError),
    #[error(transparent)]
    Checkpoint(#[from] gpse_nn::CheckpointError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, CliError>;
