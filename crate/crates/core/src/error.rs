use thiserror::Error;

/// Errors produced by the toolkit.
///
/// Variants are grouped so that front ends can map them onto exit codes:
/// argument/name/shape/parse problems are data errors, `Resource` is a cap
/// violation, and `Model`/`CommonPart` flag failed structural preconditions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("resource cap exceeded: {what} needs {size} but the cap is {cap}")]
    Resource { what: String, size: u128, cap: u128 },

    #[error("model precondition failed: {0}")]
    Model(String),

    #[error("no common part: k1 and k2 disagree on atom {atom} (probability {prob:e})")]
    CommonPart { atom: String, prob: f64 },

    #[error("protocol violation in round {round} (node {node}): {detail}")]
    Protocol {
        round: usize,
        node: usize,
        detail: String,
    },

    #[error("composition error: {0}")]
    Composition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn resource(what: impl Into<String>, size: u128, cap: u128) -> Self {
        Error::Resource {
            what: what.into(),
            size,
            cap,
        }
    }
}
