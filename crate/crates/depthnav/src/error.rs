use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// World file failed to parse against the schema.
    #[error("world schema error in {path}: {detail}")]
    WorldSchema { path: String, detail: String },

    /// World parsed but violates a geometric invariant.
    #[error("world validation error: {0}")]
    WorldValidation(String),

    /// No collision-free spawn pose could be found.
    #[error("world error: {0}")]
    World(String),

    /// An operation was called in a state its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    /// Layer shapes do not compose, or an input does not match the network.
    #[error("shape error: {0}")]
    Shape(String),

    /// Training produced a non-finite quantity.
    #[error("training error: {0}")]
    Training(String),

    /// Checkpoint file is missing, corrupt, or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Run configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
