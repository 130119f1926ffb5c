use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("decode error at byte {offset}: {detail}")]
    Decode { offset: usize, detail: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("incomplete round: missing feedback from sites {missing:?}")]
    IncompleteRound { missing: Vec<usize> },

    #[error("site {site} timed out after {retries} retries")]
    SiteTimeout { site: usize, retries: u32 },

    #[error("transport closed")]
    TransportClosed,

    #[error("format error in {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("{suite} trial {trial}: {source}")]
    Trial { suite: &'static str, trial: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain { op, detail: detail.into() }
    }
}
