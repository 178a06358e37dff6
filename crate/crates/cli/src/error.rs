use thiserror::Error;

/// Exit status for malformed command lines.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for unreadable or invalid model and data files.
pub const EXIT_MODEL_FILE: i32 = 3;
/// Exit status for failures of the numerical machinery.
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{message}")]
    Usage { code: &'static str, message: String },

    #[error("{message}")]
    ModelFile { code: &'static str, message: String },

    #[error(transparent)]
    Core(#[from] laplace_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage { code: "Usage", message: message.into() }
    }

    pub fn model_file(code: &'static str, message: impl Into<String>) -> Self {
        CliError::ModelFile { code, message: message.into() }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage { code, .. } | CliError::ModelFile { code, .. } => code,
            CliError::Core(e) => e.code(),
            CliError::Io(_) => "Io",
        }
    }

    /// Numerical failures exit with 4; every other library error is blamed
    /// on the request.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } | CliError::Io(_) => EXIT_USAGE,
            CliError::ModelFile { .. } => EXIT_MODEL_FILE,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(_) => EXIT_USAGE,
        }
    }

    /// The single line written to standard error.
    pub fn line(&self) -> String {
        let message = self.to_string().replace(['\n', '\r'], " ");
        format!("error: code={} message={}", self.code(), message.trim())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
