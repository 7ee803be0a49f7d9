use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}: non-finite value encountered")]
    NonFinite(&'static str),

    #[error("forward cache does not belong to these weights")]
    StaleCache,

    #[error("weight file: bad format (magic bytes do not match)")]
    BadFormat,

    #[error("weight file: unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("weight file: truncated")]
    Truncated,

    #[error("network spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("image format: {0}")]
    ImageFormat(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("required patch class {0} has no records")]
    EmptyClass(&'static str),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("parse error in {path}: line {line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
