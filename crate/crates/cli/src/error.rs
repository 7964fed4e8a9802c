use dosr_core::Error as CoreError;

/// Failures surfaced by the front end, each tied to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Assumption(String),

    #[error("{0}")]
    Divergence(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Assumption(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::DimensionMismatch(_) | CoreError::InvalidInput(_) | CoreError::StepTooLarge { .. } => {
                CliError::Config(msg)
            }
            CoreError::Disconnected => CliError::Assumption(format!(
                "{msg} (the network must be connected for the allocation to be solved)"
            )),
            CoreError::NonFiniteState { .. } | CoreError::BracketFailure { .. } => CliError::Divergence(msg),
            _ => CliError::Assumption(msg),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("scenario: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
