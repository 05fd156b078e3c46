use dmhsa_core::dmhsa::DmhsaError;
use dmhsa_core::scenario::ScenarioError;

use crate::config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] DmhsaError),
    #[error("non-finite loss at epoch {epoch}; diagnostics written to {dump}")]
    NonFiniteLoss { epoch: u32, dump: String },
    #[error("model file: {0}")]
    ModelFile(String),
    #[error("report schema violation in {file}: {reason}")]
    Schema { file: String, reason: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| LabError::Io { context, source }
    }

    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::NonFiniteLoss { .. } | LabError::Model(_) => 3,
            LabError::Scenario(ScenarioError::Beamforming(_)) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
