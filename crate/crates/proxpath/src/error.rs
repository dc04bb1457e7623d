use thiserror::Error;

use crate::data::Role;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("role {0} is not present in the data schema")]
    MissingRole(Role),

    #[error("singular moment system (smallest singular value {sigma_min:.3e}, norm {norm:.3e})")]
    Singular { sigma_min: f64, norm: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    /// Wraps an error with the fitting stage (e.g. `h1`, `fold 3`) it came from.
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: impl Into<String>) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: impl Into<String>) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
