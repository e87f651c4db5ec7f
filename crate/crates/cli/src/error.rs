use std::path::Path;

use urbangraph_core::bench::BenchError;
use urbangraph_core::graph::GraphError;
use urbangraph_core::srp::SrpError;
use urbangraph_core::subgraph::SubgraphFormatError;
use urbangraph_encoder::EncoderError;

/// Every failure maps to one of three exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Data { stage: String, message: String },
    #[error("{stage}: numeric error: {message}")]
    Numeric { stage: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data { .. } => 3,
            CliError::Numeric { .. } => 4,
        }
    }

    pub fn data(stage: &str, message: impl Into<String>) -> Self {
        CliError::Data {
            stage: stage.to_string(),
            message: message.into(),
        }
    }

    pub fn numeric(stage: &str, message: impl Into<String>) -> Self {
        CliError::Numeric {
            stage: stage.to_string(),
            message: message.into(),
        }
    }

    pub fn io(stage: &str, path: &Path, e: impl std::fmt::Display) -> Self {
        Self::data(stage, format!("{}: {e}", path.display()))
    }
}

/// Sorts library errors into config, data and numeric failures.
pub trait Classify {
    fn classify(self, stage: &str) -> CliError;
}

impl Classify for GraphError {
    fn classify(self, stage: &str) -> CliError {
        match self {
            GraphError::InvalidConfig(m) => CliError::Config(format!("{stage}: {m}")),
            other => CliError::data(stage, other.to_string()),
        }
    }
}

impl Classify for SrpError {
    fn classify(self, stage: &str) -> CliError {
        match self {
            SrpError::Config(m) => CliError::Config(format!("{stage}: {m}")),
            SrpError::Graph(g) => g.classify(stage),
            other => CliError::data(stage, other.to_string()),
        }
    }
}

impl Classify for BenchError {
    fn classify(self, stage: &str) -> CliError {
        match self {
            BenchError::Config(m) => CliError::Config(format!("{stage}: {m}")),
            BenchError::Graph(g) => g.classify(stage),
            other => CliError::data(stage, other.to_string()),
        }
    }
}

impl Classify for EncoderError {
    fn classify(self, stage: &str) -> CliError {
        match self {
            EncoderError::Config(m) => CliError::Config(format!("{stage}: {m}")),
            EncoderError::Numeric(m) => CliError::numeric(stage, m),
            other => CliError::data(stage, other.to_string()),
        }
    }
}

impl Classify for SubgraphFormatError {
    fn classify(self, stage: &str) -> CliError {
        CliError::data(stage, self.to_string())
    }
}
