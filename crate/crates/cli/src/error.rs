use segqc_core::Error as CoreError;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Degenerate(_) => 4,
            CliError::Internal(_) => 5,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::InvalidArgument(_) | CoreError::Generation(_) => CliError::Config(msg),
            CoreError::Degenerate(_) | CoreError::NoForeground { .. } => CliError::Degenerate(msg),
            CoreError::Io { .. }
            | CoreError::BadMagic { .. }
            | CoreError::UnsupportedDatatype(_)
            | CoreError::Truncated { .. }
            | CoreError::InvalidHeader(_)
            | CoreError::PayloadLength { .. }
            | CoreError::NonFinite { .. }
            | CoreError::Range { .. }
            | CoreError::ShapeMismatch { .. }
            | CoreError::LengthMismatch { .. }
            | CoreError::MissingField { .. }
            | CoreError::Parse(_) => CliError::Input(msg),
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("I/O error on {}: {e}", path.display()))
}
