use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] histcircle::Error),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_owned(),
            source,
        }
    }

    /// 1 validation, 2 budget, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        use histcircle::Error as E;
        match self {
            CliError::Core(E::BudgetExceeded { .. })
            | CliError::Core(E::ScheduleBudgetExceeded { .. })
            | CliError::Core(E::SolverBudgetExceeded { .. }) => 2,
            CliError::Io { .. } | CliError::Config { .. } => 3,
            CliError::Core(_) | CliError::Validation(_) => 1,
        }
    }
}
