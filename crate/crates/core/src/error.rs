use thiserror::Error;

/// Errors produced by the estimation, attack and scenario layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("agent {agent} is out of range for a network of {n_agents} agents")]
    InvalidAgent { agent: usize, n_agents: usize },

    #[error("agent {neighbor} is not in the neighborhood of agent {agent}")]
    InvalidNeighbor { agent: usize, neighbor: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("weight for directed edge {from} -> {to} is missing")]
    IncompleteWeights { from: usize, to: usize },

    #[error("no message from agent {from} available to agent {to}")]
    IncompleteMessages { from: usize, to: usize },

    #[error("no message from agent {0} in the supplied set")]
    MissingMessage(usize),

    #[error("weight row has no neighbors")]
    NoNeighbors,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("cost window is empty")]
    EmptyWindow,

    #[error("state recovery is singular: 1 - mu * |u|^2 = {0:e}")]
    SingularRecovery(f64),

    #[error("agent {victim} is not targeted by attacker {attacker}")]
    NotATarget { attacker: usize, victim: usize },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("agent {agent}: {subsets} removal subsets exceed the limit of {limit}")]
    CombinatorialGuard { agent: usize, subsets: u128, limit: u128 },

    #[error("graph generation failed: {0}")]
    Generation(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
