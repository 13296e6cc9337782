use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration, reported with the line (or override) and key.
    #[error("{location}: {key}: {message}")]
    Config {
        location: String,
        key: String,
        message: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<lognls::Error> for CliError {
    fn from(e: lognls::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}
