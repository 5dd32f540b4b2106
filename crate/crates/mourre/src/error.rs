use std::path::PathBuf;

use serde::Serialize;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const PRECONDITION: i32 = 3;
    pub const SOLVER: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error{}: {message}", field.as_ref().map(|f| format!(" in `{f}`")).unwrap_or_default())]
    Config { field: Option<String>, message: String },
    #[error("{stage}: {source}")]
    Numeric {
        stage: &'static str,
        #[source]
        source: mourre_core::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: Some(field.into()),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => exit::CONFIG,
            CliError::Numeric {
                source: mourre_core::Error::Solver(_),
                ..
            } => exit::SOLVER,
            CliError::Numeric { .. } => exit::PRECONDITION,
            CliError::Io { .. } | CliError::Other(_) => exit::FAILURE,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Numeric {
                source: mourre_core::Error::Solver(_),
                ..
            } => "solver",
            CliError::Numeric { .. } => "precondition",
            CliError::Io { .. } => "io",
            CliError::Other(_) => "failure",
        }
    }

    /// The JSON object printed on stderr when a run fails.
    pub fn report(&self) -> ErrorReport {
        let (field, stage, needed_half_length) = match self {
            CliError::Config { field, .. } => (field.clone(), None, None),
            CliError::Numeric { stage, source } => {
                let needed = match source {
                    mourre_core::Error::BoxExit {
                        needed_half_length, ..
                    } => Some(*needed_half_length),
                    _ => None,
                };
                (None, Some(*stage), needed)
            }
            _ => (None, None, None),
        };
        ErrorReport {
            error: ErrorBody {
                kind: self.kind(),
                exit_code: self.exit_code(),
                message: self.to_string(),
                field,
                stage,
                needed_half_length,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: ErrorBody,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub needed_half_length: Option<f64>,
}

/// Tags a core error with the pipeline stage that raised it.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> Stage<T> for mourre_core::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Numeric { stage, source })
    }
}
