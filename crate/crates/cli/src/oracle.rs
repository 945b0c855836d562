use std::fs;
use std::path::Path;

use llmsearch::env::maze::{ea_baseline, render_ascii, verify_exhaustive, MAX_VERIFY_CELLS};
use llmsearch::runlog::write_atomic;

use crate::error::{io_failed, CliError};

fn dims(
    size: Option<usize>,
    width: Option<usize>,
    height: Option<usize>,
) -> Result<(usize, usize), CliError> {
    let w = width.or(size);
    let h = height.or(size);
    match (w, h) {
        (Some(w), Some(h)) if w >= 2 && h >= 2 => Ok((w, h)),
        (Some(w), Some(h)) => Err(CliError::Config(format!(
            "maze must be at least 2x2, got {w}x{h}"
        ))),
        _ => Err(CliError::Config(
            "give --size or both --width and --height".into(),
        )),
    }
}

pub fn maze_ea(
    size: Option<usize>,
    width: Option<usize>,
    height: Option<usize>,
    evals: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (w, h) = dims(size, width, height)?;
    if evals == 0 {
        return Err(CliError::Config("--evals must be at least 1".into()));
    }
    let run = ea_baseline((w, h), evals, seed);
    print!("{}", render_ascii(&run.best));
    println!("score {} after {} evaluations", run.score, run.evaluations);
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| io_failed("cannot create output directory", e))?;
        let save = |name: &str, bytes: &[u8]| {
            write_atomic(&out.join(name), bytes)
                .map_err(|e| io_failed(&format!("cannot write {name}"), e))
        };
        save("maze.txt", run.best.to_text().as_bytes())?;
        save("maze.pgm", &run.best.to_pgm(8))?;
        let mut history = String::from("evaluation,best_score\n");
        for (i, s) in run.history.iter().enumerate() {
            history.push_str(&format!("{},{s}\n", i + 1));
        }
        save("history.csv", history.as_bytes())?;
    }
    Ok(())
}

pub fn maze_verify(
    size: Option<usize>,
    width: Option<usize>,
    height: Option<usize>,
) -> Result<(), CliError> {
    let (w, h) = dims(size, width, height)?;
    if w * h > MAX_VERIFY_CELLS {
        return Err(CliError::Config(format!(
            "exhaustive check is limited to {MAX_VERIFY_CELLS} cells, got {w}x{h}"
        )));
    }
    let report = verify_exhaustive(w, h).map_err(|e| CliError::Config(e.to_string()))?;
    println!(
        "{}x{}: {} patterns, {} mismatches",
        report.width, report.height, report.patterns, report.mismatches
    );
    match report.first_mismatch {
        None => Ok(()),
        Some(mask) => Err(CliError::Failed(format!(
            "first mismatch at pattern {mask:#x}"
        ))),
    }
}
