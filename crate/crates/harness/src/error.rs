use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] jcs_core::Error),

    #[error("{stage} stage failed at frame {frame}: {source}")]
    Stage {
        stage: &'static str,
        frame: usize,
        #[source]
        source: jcs_core::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl HarnessError {
    /// Machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Core(e) | HarnessError::Stage { source: e, .. } => e.category(),
            HarnessError::Config(_) | HarnessError::Toml(_) => "config",
            HarnessError::Io(_)
            | HarnessError::Csv(_)
            | HarnessError::Json(_)
            | HarnessError::Image(_) => "io",
        }
    }

    /// Process exit code for the category.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "trace-format" => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
