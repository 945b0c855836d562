use std::fmt;

use llmsearch::{ProviderError, SearchError, TaskError};

/// Command failure mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file, task or inputs: exit 2.
    Config(String),
    /// Provider rejected the credentials or none were found: exit 3.
    Auth(String),
    /// Anything else: exit 1.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Auth(_) => 3,
            CliError::Failed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Auth(m) => write!(f, "authentication error: {m}"),
            CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Auth(m) => CliError::Auth(m),
            ProviderError::Config(m) => CliError::Config(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<TaskError> for CliError {
    fn from(e: TaskError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Provider(p) => p.into(),
            SearchError::Task(t) => t.into(),
            // A runner that cannot start is a bad runner command.
            SearchError::Config(m) | SearchError::Runner(m) => CliError::Config(m),
        }
    }
}

pub fn io_failed(what: &str, e: std::io::Error) -> CliError {
    CliError::Failed(format!("{what}: {e}"))
}
