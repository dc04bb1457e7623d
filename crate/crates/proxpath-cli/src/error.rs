use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flag or config value; exits with status 2.
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] proxpath::Error),
    #[error("cannot read config {path}: {source}")]
    ConfigRead { path: String, source: std::io::Error },
    #[error("config {path}: {source}")]
    ConfigParse { path: String, source: toml::de::Error },
    #[error("serializing provenance: {0}")]
    Provenance(#[from] toml::ser::Error),
    #[error("writing {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::ConfigParse { .. } => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
