use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] bonefrac::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("output {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Numerical(String),
    /// The run completed but at least one check failed.
    #[error("{0}")]
    ChecksFailed(String),
}

impl CliError {
    /// 0 success, 1 numerical failure, 2 input error, 3 topology/group error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => e.exit_code(),
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Output { .. } | CliError::Numerical(_) | CliError::ChecksFailed(_) => 1,
        }
    }
}
