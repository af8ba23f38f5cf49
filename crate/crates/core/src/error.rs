use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the distillation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("size error: requested {requested} items from a collection of {available}")]
    Size { requested: usize, available: usize },

    #[error("arity error: expected {expected} examples, got {actual}")]
    Arity { expected: usize, actual: usize },

    #[error("input error: {0}")]
    Input(String),

    #[error("incompatible: {0}")]
    Incompatible(String),

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("plan error: {0}")]
    Plan(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("run failed at iteration {iteration}: {source}")]
    Iteration {
        iteration: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("run stopped after {completed} of {planned} iterations")]
    Incomplete { completed: u32, planned: u32 },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 config, 3 data, 4 training failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Plan(_) | Error::Arity { .. } | Error::Incompatible(_) => 2,
            Error::Size { .. }
            | Error::Input(_)
            | Error::Parse { .. }
            | Error::Checkpoint(_)
            | Error::Io { .. }
            | Error::Serde(_) => 3,
            Error::Diverged { .. } | Error::Incomplete { .. } => 4,
            Error::Iteration { source, .. } => match source.exit_code() {
                2 => 2,
                3 => 3,
                _ => 4,
            },
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
