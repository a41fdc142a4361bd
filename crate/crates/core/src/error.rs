use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("segmentation error: {0}")]
    Segmentation(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("signal error: {0}")]
    Signal(String),
    #[error("metric undefined: {0}")]
    MetricUndefined(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("stale tape: {0}")]
    Tape(String),
    #[error("optimizer error: {0}")]
    Optim(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("objective error: {0}")]
    Objective(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 config, 3 data, 4 numeric/training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::Budget(_) => 2,
            Error::Segmentation(_) | Error::Data(_) | Error::Io(_) | Error::Json(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 4,
        }
    }

    /// Wraps the error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
