use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::kg::TurtleError;
use crate::query::QueryError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{}:{}: {source}", path.display(), source.position().0, source.position().1)]
    Turtle { path: PathBuf, source: TurtleError },
    #[error(transparent)]
    Query(#[from] QueryError),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }
}
