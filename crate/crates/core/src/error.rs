use std::path::PathBuf;

use thiserror::Error;

use crate::egp::Trajectory;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("invalid dyad ({i}, {j}){}", .n.map(|n| format!(" for a graph on {n} nodes")).unwrap_or_default())]
    InvalidDyad { i: usize, j: usize, n: Option<usize> },
    #[error("dimension mismatch: expected {expected} nodes, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("node {node} has attribute value {value}, expected 0 or 1")]
    InvalidAttribute { node: usize, value: u8 },
    #[error("faction design needs a node count divisible by 4, got {0}")]
    InvalidDesign(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McmcError {
    #[error(
        "draw budget exhausted: {accepted} of {wanted} graphs found in {draws} draws \
         (acceptance rate {rate:.3e})"
    )]
    BudgetExhausted {
        draws: u64,
        accepted: usize,
        wanted: usize,
        rate: f64,
    },
    #[error("invalid chain configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateSpaceError {
    #[error("state space is empty")]
    Empty,
    #[error("state probabilities have not been finalized")]
    NotFinalized,
    #[error("no observed state in the {0} regime")]
    RegimeNotFound(&'static str),
    #[error("unknown state id {0}")]
    UnknownState(u32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("no path between states {source_id} and {target}")]
    Disconnected { source_id: u32, target: u32 },
    #[error("path has {0} states, milestones need at least 3")]
    NoInterior(usize),
    #[error("smoothing window must be odd, got {0}")]
    EvenWindow(usize),
    #[error(transparent)]
    State(#[from] StateSpaceError),
}

#[derive(Debug, Error, Clone)]
pub enum EgpError {
    #[error("all toggle rates are zero: absorbing state")]
    Absorbing,
    #[error("event budget of {budget} exhausted before reaching the target")]
    BudgetExhausted { budget: u64, partial: Box<Trajectory> },
    #[error("seed graph is not in the source state")]
    SeedNotInSource,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("trajectory does not reach the target state from the source")]
    MalformedTrajectory,
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        IoError::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Umbrella error for pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
    #[error(transparent)]
    StateSpace(#[from] StateSpaceError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Egp(#[from] EgpError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
