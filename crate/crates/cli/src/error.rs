use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] kpgan::Error),

    #[error("missing dependency: {0}")]
    MissingDependency(String),

    #[error("{0}")]
    Usage(String),

    #[error("gradient check failed: {0}")]
    GradcheckFailed(String),
}

impl CliError {
    /// 2 parse/config, 3 missing stage dependency, 4 checkpoint version,
    /// 5 misaligned files, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use kpgan::Error as E;
        match self {
            CliError::Core(E::Parse { .. } | E::Schema { .. } | E::Config(_)) | CliError::Usage(_) => 2,
            CliError::MissingDependency(_) => 3,
            CliError::Core(E::Version { .. }) => 4,
            CliError::Core(E::Alignment(_)) => 5,
            CliError::Core(_) | CliError::GradcheckFailed(_) => 1,
        }
    }
}
