use std::fmt;
use std::path::PathBuf;

use crate::gateway::GatewayError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which part of a triple failed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleField {
    Head,
    Relation,
    Tail,
}

impl fmt::Display for TripleField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TripleField::Head => "head",
            TripleField::Relation => "relation",
            TripleField::Tail => "tail",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("rejected triple: {field} is empty after normalization")]
    RejectedTriple { field: TripleField },

    #[error("edge kind {0} cannot be inserted as a triple")]
    InvalidEdgeKind(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("element {0} cannot carry concepts")]
    NotConceptualizable(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("personalization must be non-negative, finite and not all zero")]
    InvalidPersonalization,

    #[error("empty sequence")]
    EmptySequence,

    #[error("empty set")]
    EmptySet,

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("csv error in {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
