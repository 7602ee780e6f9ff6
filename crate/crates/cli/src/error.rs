//! Exit codes: 0 ok, 2 input, 3 backend, 4 gated, 5 malformed output.

use std::process::ExitCode;

use taiscan_core::backends::BackendError;
use taiscan_core::evalharness::EvalError;
use taiscan_core::ragflow::RagError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Backend(String),
    /// The explanation is printed on stdout before returning this.
    #[error("pre-screening blocked the assessment")]
    Gated,
    #[error("{0}")]
    Malformed(String),
}

impl CliError {
    pub fn input(e: impl std::fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Input(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Gated => 4,
            CliError::Malformed(_) => 5,
        })
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::InvalidRequest(_) | BackendError::Fixture { .. } => CliError::Input(e.to_string()),
            BackendError::EmptyCompletion => CliError::Malformed(e.to_string()),
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<RagError> for CliError {
    fn from(e: RagError) -> Self {
        match e {
            RagError::Backend(b) => b.into(),
            RagError::MalformedOutput(_) | RagError::UnknownRiskLevel(_) => CliError::Malformed(e.to_string()),
            RagError::InvalidInput(_) | RagError::Index(_) | RagError::UnknownRef(_) | RagError::Template(_) => {
                CliError::Input(e.to_string())
            }
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Rag(r) => r.into(),
            EvalError::Backend(b) => b.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}
