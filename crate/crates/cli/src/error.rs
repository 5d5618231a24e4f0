use divtest_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{field}`: {message}")]
    Config {
        field: &'static str,
        message: String,
    },
    #[error("cannot read config {path}: {message}")]
    ConfigFile { path: String, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(field: &'static str, message: impl Into<String>) -> Self {
        CliError::Config {
            field,
            message: message.into(),
        }
    }

    /// Wraps a core validation error as a config error on `field`.
    pub fn field(field: &'static str) -> impl Fn(CoreError) -> CliError {
        move |e| CliError::Config {
            field,
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::ConfigFile { .. } => 2,
            CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                CoreError::BudgetExceeded { .. } => 3,
                CoreError::RadiusTooLarge { .. }
                | CoreError::NTooSmall { .. }
                | CoreError::NonPositiveArgument(_)
                | CoreError::NegativeArgument(_) => 4,
                _ => 2,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
