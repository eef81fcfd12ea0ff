use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the featurization and classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing required file {0}")]
    MissingFile(PathBuf),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: i64, len: usize },

    #[error("split sets overlap at node {0}")]
    SplitOverlap(usize),

    #[error("graph has no node attributes, but the recipe requires them")]
    MissingAttributes,

    #[error("capability exceeded: {what} = {got}, backend limit is {limit}")]
    Capability {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    #[error("feature budget of {max} cannot be met: protected groups already use {protected} columns")]
    Budget { max: usize, protected: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("bridge transport failure (request {request_id:?}): {msg}")]
    Transport { request_id: Option<u64>, msg: String },

    #[error("bridge returned an error for request {request_id}: {msg}")]
    Remote { request_id: u64, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn transport(request_id: Option<u64>, msg: impl Into<String>) -> Self {
        Error::Transport {
            request_id,
            msg: msg.into(),
        }
    }

    /// Process exit code for the command-line tool: 2 validation, 3 compute, 4 transport.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Io { .. }
            | Error::MissingFile(_)
            | Error::Invalid(_)
            | Error::IndexOutOfRange { .. }
            | Error::SplitOverlap(_)
            | Error::MissingAttributes
            | Error::Capability { .. }
            | Error::Budget { .. } => 2,
            Error::NoConvergence { .. } => 3,
            Error::Transport { .. } | Error::Remote { .. } => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
