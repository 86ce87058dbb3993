use std::io;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Syntax or semantic problem in an input file; carries the 1-based line.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A structural invariant of the data model is violated.
    #[error("{0}")]
    Validation(String),

    /// The dependency graph contains a cycle; the path closes the cycle.
    #[error("dependency cycle: {0}")]
    Cycle(String),

    /// No frequency fits under the given power bound.
    #[error("node {node}: no admissible frequency under {bound_mw} mW (minimum operating power is {min_mw} mW)")]
    NoAdmissibleFrequency { node: u32, bound_mw: u32, min_mw: u32 },

    /// The optimization problem has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A job referenced by an operation has no power bound assigned.
    #[error("job J_{{{node},{index}}} has no power bound assigned")]
    UnmappedJob { node: u32, index: u32 },

    /// A received datagram could not be decoded.
    #[error("malformed datagram: {0}")]
    Malformed(String),

    /// Socket-level failure.
    #[error("network: {0}")]
    Net(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 parse/validation, 3 infeasible, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation(_) | Error::Cycle(_) => 2,
            Error::NoAdmissibleFrequency { .. } | Error::Infeasible(_) | Error::UnmappedJob { .. } => 3,
            Error::Malformed(_) | Error::Net(_) | Error::Io(_) => 4,
        }
    }
}
