use std::path::PathBuf;

use crate::dataset::{ItemId, UserId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate interaction for user {user}, item {item}")]
    DuplicatePair { user: UserId, item: ItemId },

    #[error("user {0} has no group label")]
    MissingGroup(UserId),

    #[error("user {0} appears more than once in the group file")]
    DuplicateGroup(String),

    #[error("rating {rating} outside scale [{min}, {max}]")]
    RatingOutOfScale { rating: f64, min: f64, max: f64 },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("user {user} has only {count} interaction(s); apply k-core filtering (k >= 2) before splitting")]
    ProfileTooSmall { user: UserId, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("metric {metric}: {message}")]
    Metric {
        metric: &'static str,
        message: String,
    },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn metric(metric: &'static str, message: impl Into<String>) -> Self {
        Error::Metric {
            metric,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips `Iteration` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Iteration { source, .. } => source.root(),
            other => other,
        }
    }
}
