use serde_json::{json, Value};

use subsample_mcmc::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] Error),

    /// The chain stopped early; a partial trace was written.
    #[error("run aborted after {completed} iterations: {source}")]
    Aborted { completed: usize, source: Error },

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Io(_) | CliError::Core(Error::Io(_)) => "io",
            CliError::Core(Error::Ingest { .. }) => "ingest",
            CliError::Core(
                Error::InvalidConfig(_)
                | Error::InvalidTolerance(_)
                | Error::InvalidParams(_)
                | Error::InvalidPanel { .. }
                | Error::InsufficientReplication { .. }
                | Error::InvalidDesign(_),
            ) => "validation",
            CliError::Core(_) => "runtime",
            CliError::Aborted { .. } => "aborted",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "validation" | "ingest" => 2,
            "aborted" | "runtime" => 3,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({ "error": { "kind": self.kind(), "message": self.to_string() } });
        let line = match self {
            CliError::Core(Error::Ingest { line, .. }) => Some(*line),
            _ => None,
        };
        if let Some(line) = line {
            v["error"]["line"] = json!(line);
        }
        if let CliError::Aborted { completed, .. } = self {
            v["error"]["completed_iterations"] = json!(completed);
        }
        v
    }
}
