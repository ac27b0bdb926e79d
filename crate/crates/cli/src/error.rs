use thiserror::Error;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_ENGINE: i32 = 3;
pub const EXIT_STATISTICS: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("engine aborted{}: {message}", .trajectory.map(|id| format!(" in trajectory {id}")).unwrap_or_default())]
    Engine { message: String, trajectory: Option<u64> },

    #[error("statistics failed: {0}")]
    Statistics(String),

    #[error("refusing stale or mismatched data: {0}")]
    Stale(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Engine { .. } => EXIT_ENGINE,
            CliError::Statistics(_) => EXIT_STATISTICS,
            CliError::Stale(_) | CliError::Io { .. } => EXIT_IO,
        }
    }

    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }

    /// Classifies an engine-side error raised while validating a config.
    pub(crate) fn validation(e: wgqed::Error) -> CliError {
        CliError::Validation(e.to_string())
    }

    /// Classifies an error raised while computing statistics.
    pub(crate) fn statistics(e: wgqed::Error) -> CliError {
        match e {
            wgqed::Error::BinTooNarrow { .. } => CliError::Validation(e.to_string()),
            other => CliError::Statistics(other.to_string()),
        }
    }

    pub(crate) fn engine(e: wgqed::Error) -> CliError {
        match e {
            wgqed::Error::Trajectory { id, source } => CliError::Engine { message: source.to_string(), trajectory: Some(id) },
            other => CliError::Engine { message: other.to_string(), trajectory: None },
        }
    }
}

impl From<wgqed::Error> for CliError {
    fn from(e: wgqed::Error) -> Self {
        CliError::engine(e)
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
