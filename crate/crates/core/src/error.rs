use std::fmt;
use std::io;
use std::path::PathBuf;

use crate::heuristics::{HeuristicKind, StateParam};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Where a divergence was detected during training.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DivergenceSite {
    pub heuristic: Option<HeuristicKind>,
    pub step: Option<usize>,
    pub entity: Option<usize>,
}

impl fmt::Display for DivergenceSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(h) = self.heuristic {
            parts.push(format!("heuristic {h}"));
        }
        if let Some(s) = self.step {
            parts.push(format!("step {s}"));
        }
        if let Some(e) = self.entity {
            parts.push(format!("entity {e}"));
        }
        if parts.is_empty() {
            f.write_str("unknown site")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged ({0})")]
    Divergence(DivergenceSite),

    #[error("{heuristic} needs a population of at least {required}, found {found}")]
    PopulationTooSmall {
        heuristic: HeuristicKind,
        required: usize,
        found: usize,
    },

    #[error("state parameter {param} is not resolved for {heuristic}")]
    UnresolvedProxy {
        heuristic: HeuristicKind,
        param: StateParam,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("data error at row {row}, column '{column}': {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error("csv schema: {0}")]
    Schema(String),

    #[error("selection scores are all zero")]
    DegenerateScores,

    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn divergence(heuristic: HeuristicKind) -> Self {
        Error::Divergence(DivergenceSite {
            heuristic: Some(heuristic),
            ..Default::default()
        })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Fills in the step/entity of a divergence error raised deeper in the stack.
    pub fn at(self, step: usize, entity: usize) -> Self {
        match self {
            Error::Divergence(mut site) => {
                site.step.get_or_insert(step);
                site.entity.get_or_insert(entity);
                Error::Divergence(site)
            }
            other => other,
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence(_))
    }

    /// Failure to read or write a file, as opposed to bad content.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            _ => false,
        }
    }
}
