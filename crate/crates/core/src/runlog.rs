//! Per-iteration run log records and their JSONL encoding.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::ExecStatus;

/// One line of the run log. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub trial: usize,
    pub iteration: usize,
    pub repairs: usize,
    pub program_sha: String,
    pub exec: ExecStatus,
    pub fitness: Option<f64>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub cost_usd: f64,
    /// Wall time of the iteration; zero under deterministic providers.
    pub ms: u64,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("corrupt run log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn to_jsonl(records: &[IterationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<IterationRecord>, LogError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let rec: IterationRecord =
                serde_json::from_str(l).map_err(|e| LogError::CorruptLog {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            if rec.fitness.is_some() && rec.exec != ExecStatus::Executable {
                return Err(LogError::CorruptLog {
                    line: i + 1,
                    reason: "fitness recorded for a non-executable program".into(),
                });
            }
            Ok(rec)
        })
        .collect()
}

pub fn read_log(path: &Path) -> Result<Vec<IterationRecord>, LogError> {
    parse_jsonl(&fs::read_to_string(path)?)
}

/// Writes via a temporary sibling file and a rename, so readers never see
/// a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
