use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the augmentation engine.
///
/// Every variant maps to one short machine-readable kind (see [`Error::kind`])
/// which the command-line front end prints as a stable prefix.
#[derive(Error, Debug)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("size mismatch: {0}")]
    Size(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("infeasible geometry: {0}")]
    Geometry(String),
    #[error("unknown entry: {0}")]
    Lookup(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config error: {0}")]
    Config(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyInput(_) => "empty-input",
            Error::Size(_) => "size",
            Error::Shape(_) => "shape",
            Error::DegenerateSignal(_) => "degenerate-signal",
            Error::Parameter(_) => "parameter",
            Error::Calibration(_) => "calibration",
            Error::Geometry(_) => "geometry",
            Error::Lookup(_) => "lookup",
            Error::Format(_) => "format",
            Error::Evaluation(_) => "evaluation",
            Error::Io(_) => "io",
            Error::Config(_) => "config",
        }
    }
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
