use thiserror::Error;

/// Errors raised by the processing chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid training-field layout: {0}")]
    Layout(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no signal: {0}")]
    NoSignal(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no static reference available")]
    NoStaticReference,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("trace schema error: {0}")]
    Schema(String),

    #[error("trace frame {frame}: {msg}")]
    Frame { frame: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short category name, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Layout(_) => "layout",
            Error::DegenerateGeometry(_) => "degenerate-geometry",
            Error::NoSignal(_) => "no-signal",
            Error::InsufficientData(_) => "insufficient-data",
            Error::NoStaticReference => "no-static-reference",
            Error::Numerical(_) => "numerical",
            Error::Schema(_) | Error::Frame { .. } | Error::Json(_) => "trace-format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
