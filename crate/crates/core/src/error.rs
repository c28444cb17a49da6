use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown raw label {0:?}")]
    UnknownLabel(String),

    #[error("label {0:?} is excluded by the label scheme")]
    DroppedLabel(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("word {0:?} is not in the embedding vocabulary")]
    MissingWord(String),

    #[error("vector for {0:?} is parallel to the gender direction and cannot be neutralized")]
    DegenerateNeutralize(String),

    #[error("pair ({0:?}, {1:?}) cannot be equalized: projected midpoint has norm > 1")]
    DegenerateEqualize(String, String),

    #[error("template {template:?}: {message}")]
    Template { template: String, message: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("records contain no {0} examples")]
    SingleClass(&'static str),

    #[error("group {group} has no {kind} examples; {rate} is undefined")]
    EmptyGroup {
        group: String,
        kind: &'static str,
        rate: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
