use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use llmsearch::metrics::{
    aggregate_ranks, curves_csv, rank_csv, rank_markdown, reward_curves, summarize_run,
    summary_csv, summary_table_markdown, DomainResults, RunSummary,
};
use llmsearch::runlog::{read_log, write_atomic};
use llmsearch::IterationRecord;

use crate::config::RunManifest;
use crate::error::{io_failed, CliError};

struct LoadedRun {
    label: String,
    model: String,
    domain: String,
    lower_is_better: bool,
    records: Vec<IterationRecord>,
    summary: RunSummary,
    trials: usize,
}

fn load_run(dir: &Path) -> Result<LoadedRun, CliError> {
    let log_path = dir.join("log.jsonl");
    if !log_path.is_file() {
        return Err(CliError::Config(format!(
            "{} has no log.jsonl",
            dir.display()
        )));
    }
    let records = read_log(&log_path).map_err(|e| CliError::Config(e.to_string()))?;
    let manifest = RunManifest::read(dir).ok();
    let trials = manifest.as_ref().map_or_else(
        || records.iter().map(|r| r.trial + 1).max().unwrap_or(0),
        |m| m.search.trials,
    );
    let summary = summarize_run(&records, trials)
        .map_err(|e| CliError::Config(format!("{}: {e}", log_path.display())))?;
    let dir_name = dir.file_name().map_or_else(
        || dir.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    let (label, model, domain, lower_is_better) = match &manifest {
        Some(m) if m.task == "vehicle" => (
            m.label(),
            m.provider.clone(),
            format!("vehicle@{}", m.omega),
            true,
        ),
        Some(m) => (m.label(), m.provider.clone(), m.task.clone(), false),
        None => (dir_name.clone(), dir_name, "unknown".into(), false),
    };
    Ok(LoadedRun {
        label,
        model,
        domain,
        lower_is_better,
        records,
        summary,
        trials,
    })
}

fn write(out: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = out.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| io_failed(&format!("cannot create {}", parent.display()), e))?;
    }
    write_atomic(&path, bytes)
        .map_err(|e| io_failed(&format!("cannot write {}", path.display()), e))
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.@".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Summary, rank and curve tables over one or more run directories.
pub fn cmd_report(dirs: &[PathBuf], out: Option<&Path>) -> Result<(), CliError> {
    if dirs.is_empty() {
        return Err(CliError::Config("no run directories given".into()));
    }
    let out: PathBuf = match (out, dirs) {
        (Some(o), _) => o.to_path_buf(),
        (None, [single]) => single.clone(),
        (None, _) => {
            return Err(CliError::Config(
                "--out is required with several run directories".into(),
            ))
        }
    };
    let runs = dirs
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>, _>>()?;

    let rows: Vec<(String, RunSummary)> = runs
        .iter()
        .map(|r| (r.label.clone(), r.summary.clone()))
        .collect();
    let mut md = String::from("## Runs\n\n");
    md.push_str(&summary_table_markdown(&rows));

    let mut models: Vec<String> = Vec::new();
    let mut domains: BTreeMap<String, DomainResults> = BTreeMap::new();
    for r in &runs {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
        let value = if r.lower_is_better {
            // Vehicle fitness is 1/(1+d); rank on the distance itself.
            (r.summary.best_fitness > 0.0).then(|| 1.0 / r.summary.best_fitness - 1.0)
        } else {
            Some(r.summary.best_fitness)
        };
        let entry = domains
            .entry(r.domain.clone())
            .or_insert_with(|| DomainResults {
                domain: r.domain.clone(),
                lower_is_better: r.lower_is_better,
                results: BTreeMap::new(),
            });
        if let Some(v) = value {
            let slot = entry.results.entry(r.model.clone()).or_insert(v);
            let better = if r.lower_is_better {
                v < *slot
            } else {
                v > *slot
            };
            if better {
                *slot = v;
            }
        }
    }
    let domains: Vec<DomainResults> = domains.into_values().collect();
    let ranks = aggregate_ranks(&models, &domains).map_err(|e| CliError::Config(e.to_string()))?;
    md.push_str("\n## Ranks\n\n");
    md.push_str(&rank_markdown(&ranks));

    write(&out, "summary.md", md.as_bytes())?;
    write(&out, "summary.csv", summary_csv(&rows).as_bytes())?;
    write(&out, "rank.md", rank_markdown(&ranks).as_bytes())?;
    write(&out, "rank.csv", rank_csv(&ranks).as_bytes())?;
    if let [single] = runs.as_slice() {
        write(
            &out,
            "curves.csv",
            curves_csv(&reward_curves(&single.records, single.trials)).as_bytes(),
        )?;
    } else {
        for (i, r) in runs.iter().enumerate() {
            let name = format!("curves/{i:02}-{}.csv", file_safe(&r.label));
            write(
                &out,
                &name,
                curves_csv(&reward_curves(&r.records, r.trials)).as_bytes(),
            )?;
        }
    }
    print!("{md}");
    println!("report in {}", out.display());
    Ok(())
}
