use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] dynrisk_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 2 for bad input, 3 for an infeasible constraint, 4 for solver
    /// diagnostics, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use dynrisk_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(E::Domain(_) | E::Config(_)) => 2,
            CliError::Core(E::Infeasible { .. }) => 3,
            CliError::Core(E::Numerical(_) | E::NonFiniteControl { .. } | E::GridDomain(_)) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
