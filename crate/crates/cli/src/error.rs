use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or invalid input.
    #[error("{message}")]
    Input { message: String, details: Value },
    #[error("{0}")]
    Processing(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input { .. } => 3,
            CliError::Processing(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Input { .. } => "input",
            CliError::Processing(_) => "processing",
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Input { details, .. } = self {
            if !details.is_null() {
                v["details"] = details.clone();
            }
        }
        v
    }
}

pub fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input {
        message: e.to_string(),
        details: Value::Null,
    }
}

pub fn processing(e: impl std::fmt::Display) -> CliError {
    CliError::Processing(e.to_string())
}

pub type Result<T> = std::result::Result<T, CliError>;
