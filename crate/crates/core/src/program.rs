//! Candidate programs and the execution-status taxonomy shared by the
//! sandbox, the tasks and the search loop.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Outcome classification for a candidate program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExecStatus {
    Executable,
    SyntaxError,
    RuntimeError,
    InvalidOutput,
    Timeout,
    Crash,
    ProtocolError,
}

impl ExecStatus {
    pub const ALL: [ExecStatus; 7] = [
        ExecStatus::Executable,
        ExecStatus::SyntaxError,
        ExecStatus::RuntimeError,
        ExecStatus::InvalidOutput,
        ExecStatus::Timeout,
        ExecStatus::Crash,
        ExecStatus::ProtocolError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExecStatus::Executable => "Executable",
            ExecStatus::SyntaxError => "SyntaxError",
            ExecStatus::RuntimeError => "RuntimeError",
            ExecStatus::InvalidOutput => "InvalidOutput",
            ExecStatus::Timeout => "Timeout",
            ExecStatus::Crash => "Crash",
            ExecStatus::ProtocolError => "ProtocolError",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }

    pub fn is_executable(self) -> bool {
        self == ExecStatus::Executable
    }
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A classified failure of a single load or invocation.
///
/// `detail` carries the diagnostic text verbatim; it is what ends up in the
/// repair prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub status: ExecStatus,
    pub detail: String,
}

impl Fault {
    pub fn new(status: ExecStatus, detail: impl Into<String>) -> Self {
        debug_assert!(status != ExecStatus::Executable);
        Self {
            status,
            detail: detail.into(),
        }
    }

    pub fn syntax(detail: impl Into<String>) -> Self {
        Self::new(ExecStatus::SyntaxError, detail)
    }

    pub fn runtime(detail: impl Into<String>) -> Self {
        Self::new(ExecStatus::RuntimeError, detail)
    }

    pub fn invalid_output(detail: impl Into<String>) -> Self {
        Self::new(ExecStatus::InvalidOutput, detail)
    }

    pub fn timeout(detail: impl Into<String>) -> Self {
        Self::new(ExecStatus::Timeout, detail)
    }

    pub fn crash(detail: impl Into<String>) -> Self {
        Self::new(ExecStatus::Crash, detail)
    }

    pub fn protocol(detail: impl Into<String>) -> Self {
        Self::new(ExecStatus::ProtocolError, detail)
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.status, self.detail)
    }
}

impl std::error::Error for Fault {}

/// Hex-encoded SHA-256 of a program's source text.
pub fn program_sha(source: &str) -> String {
    hex::encode(Sha256::digest(source.as_bytes()))
}

/// One unit of generated source with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProgram {
    pub source: String,
    pub program_id: String,
    pub trial: usize,
    pub iteration: usize,
    pub repair_count: usize,
    pub exec_status: ExecStatus,
    /// Present only for executable programs.
    pub fitness: Option<f64>,
    /// Diagnostic of the last failure, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CandidateProgram {
    pub fn new(source: String, trial: usize, iteration: usize, repair_count: usize) -> Self {
        Self {
            program_id: program_sha(&source),
            source,
            trial,
            iteration,
            repair_count,
            exec_status: ExecStatus::Executable,
            fitness: None,
            error: None,
        }
    }

    /// Fitness used for comparisons: non-executable programs count as zero.
    pub fn effective_fitness(&self) -> f64 {
        match (self.exec_status, self.fitness) {
            (ExecStatus::Executable, Some(f)) => f,
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha_is_stable_hex() {
        let sha = program_sha("abc");
        assert_eq!(
            sha,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn status_names_round_trip() {
        for st in ExecStatus::ALL {
            assert_eq!(ExecStatus::parse(st.as_str()), Some(st));
        }
        assert_eq!(ExecStatus::parse("Nope"), None);
    }

    #[test]
    fn non_executable_counts_as_zero() {
        let mut p = CandidateProgram::new("x".into(), 0, 1, 0);
        p.fitness = Some(3.0);
        assert_eq!(p.effective_fitness(), 3.0);
        p.exec_status = ExecStatus::Crash;
        assert_eq!(p.effective_fitness(), 0.0);
    }
}
