use thiserror::Error;

/// Errors raised anywhere in the offline/online pipeline.
#[derive(Debug, Error)]
pub enum RomError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("rank error: requested rank {requested} but mode {first_defective} has a numerically zero eigenvalue")]
    Rank {
        requested: usize,
        first_defective: usize,
    },
    #[error("solver diverged at step {step} (t = {time}): {reason}")]
    Diverged {
        step: usize,
        time: f64,
        reason: String,
    },
    #[error("kernel matrix is ill-conditioned (condition estimate {condition:.3e}); use a positive regularization")]
    Conditioning { condition: f64 },
    #[error("supremizer enrichment failed for pressure mode {mode}: {reason}")]
    Enrichment { mode: usize, reason: String },
    #[error("Newton iteration did not converge at t = {time} after {iterations} iterations; residual history {history:?}")]
    Newton {
        time: f64,
        iterations: usize,
        history: Vec<f64>,
    },
    #[error("relative error undefined: reference field has zero norm")]
    UndefinedError,
    #[error("missing artifacts: {0:?}")]
    MissingArtifacts(Vec<String>),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<RomError>,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RomError>;

impl RomError {
    pub fn dim(msg: impl Into<String>) -> Self {
        RomError::Dimension(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        RomError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        RomError::Data(msg.into())
    }

    pub fn in_stage(self, stage: &str) -> Self {
        RomError::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
