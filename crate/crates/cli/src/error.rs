use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Schema or parameter violation, with the offending key path
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("simulation failed: {0}")]
    Simulation(#[from] thermovar::Error),

    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0} study check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), message: message.into() }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
