//! Experiment runner behind the `coalscale` command.
//!
//! A run resolves its configuration, computes every result in memory and
//! only then hands back the artifacts to write, so a configuration error
//! never leaves partial files behind.

pub mod config;
pub mod experiments;
pub mod output;
pub mod report;

use std::path::PathBuf;

pub use config::{resolve, Experiment, Resolved, RunConfig, SCHEMA_VERSION};

/// Why a run did not succeed. Maps onto exit codes 2 and 1.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Failure {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("audit failure: {0}")]
    Audit(String),
}

impl Failure {
    pub fn config(e: coalscale::Error) -> Self {
        Failure::Config(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Audit(_) => 1,
        }
    }
}

impl From<coalscale::Error> for Failure {
    fn from(e: coalscale::Error) -> Self {
        use coalscale::Error as E;
        match e {
            E::ClaimViolation { .. } | E::Numerical(_) => Failure::Audit(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

/// Bytes destined for a file, or for standard output when `path` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: Option<PathBuf>,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Human-readable text for standard error.
    pub notes: Vec<String>,
    /// Failed audits; a non-empty list means exit status 1.
    pub audit_failures: Vec<String>,
}

/// Resolves and runs one experiment.
pub fn execute(kind: Experiment, config: &RunConfig) -> Result<Outcome, Failure> {
    let resolved = resolve(kind, config)?;
    experiments::run(&resolved, config.out.clone())
}

/// Reads the `COALSCALE_THREADS` cap, if set.
pub fn thread_cap() -> Result<Option<usize>, Failure> {
    match std::env::var("COALSCALE_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Config(format!(
                "COALSCALE_THREADS must be a positive integer, got {s:?}"
            ))),
        },
    }
}
