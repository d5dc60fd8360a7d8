use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    /// A record breaks a dataset invariant.
    #[error("video {video_id}{}: {field}: {message}", segment_suffix(.segment_id))]
    Data {
        video_id: String,
        segment_id: Option<String>,
        field: String,
        message: String,
    },

    #[error("video {video_id}, segment {segment_id}: unknown label {label:?} for node {node}")]
    UnknownLabel {
        video_id: String,
        segment_id: String,
        node: String,
        label: String,
    },

    #[error("segment {segment_id}: missing {family} scores required by the unary mode")]
    MissingScores {
        segment_id: String,
        family: &'static str,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("joint state space of {0} assignments exceeds the enumeration limit")]
    StateSpaceTooLarge(u128),

    #[error("video {0} has no segments")]
    EmptyVideo(String),

    #[error("{module}: {message}")]
    Module {
        module: &'static str,
        message: String,
    },

    #[error("model artifact {path}: {message}")]
    Artifact { path: PathBuf, message: String },
}

fn segment_suffix(segment_id: &Option<String>) -> String {
    match segment_id {
        Some(id) => format!(", segment {id}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn module(module: &'static str, message: impl Into<String>) -> Self {
        Error::Module {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn artifact(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Artifact {
            path: path.into(),
            message: message.into(),
        }
    }
}
