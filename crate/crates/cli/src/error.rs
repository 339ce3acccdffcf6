use serde_json::json;
use thiserror::Error;

use tomforge_core::construction_pipeline::PipelineError;
use tomforge_core::curation::CurationError;
use tomforge_core::esc_augment::EscError;
use tomforge_core::evaluation::EvalError;
use tomforge_core::inference::InferenceError;
use tomforge_core::llm_backend::LlmError;
use tomforge_core::task_builder::TaskError;
use tomforge_core::StoreError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Backend(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Backend(_) => "backend",
            CliError::Io(_) => "io",
        }
    }

    /// Single-line JSON written to stderr.
    pub fn to_json(&self) -> String {
        json!({
            "error": self.kind(),
            "code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> CliError {
        CliError::Io(format!("{context}: {err}"))
    }
}

fn store(e: StoreError) -> CliError {
    match e {
        StoreError::Io { .. } => CliError::Io(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        store(e)
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Backend { .. } => CliError::Backend(e.to_string()),
            PipelineError::Io { .. } => CliError::Io(e.to_string()),
            PipelineError::Store(s) => store(s),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CurationError> for CliError {
    fn from(e: CurationError) -> Self {
        match e {
            CurationError::Store(s) => store(s),
            CurationError::Pipeline(p) => p.into(),
            CurationError::Log { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TaskError> for CliError {
    fn from(e: TaskError) -> Self {
        match e {
            TaskError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(s) => store(s),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::StageFailure { .. } => CliError::Backend(e.to_string()),
            InferenceError::Store(s) => store(s),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EscError> for CliError {
    fn from(e: EscError) -> Self {
        let class = match &e {
            EscError::Generation(InferenceError::StageFailure { .. }) => 4,
            EscError::Io(StoreError::Io { .. }) => 5,
            EscError::InDialogue { source, .. } => match source.as_ref() {
                EscError::Generation(InferenceError::StageFailure { .. }) => 4,
                _ => 3,
            },
            _ => 3,
        };
        let message = e.to_string();
        match class {
            4 => CliError::Backend(message),
            5 => CliError::Io(message),
            _ => CliError::Validation(message),
        }
    }
}
