//! Run statistics, rank aggregation across models, and best-so-far curves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::ExecStatus;
use crate::runlog::IterationRecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no records to summarize")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trials: usize,
    pub iterations: usize,
    /// Programs generated, counting every repair attempt.
    pub programs: usize,
    /// Percent of iterations whose program ran and earned positive fitness.
    pub s_iter: f64,
    /// Percent of trials with at least one such iteration.
    pub s_trl: f64,
    /// Percent of generated programs that could be executed.
    pub exec_rate: f64,
    pub cost_usd: f64,
    pub best_fitness: f64,
    pub avg_fitness: f64,
    /// Population standard deviation of the per-trial bests.
    pub sigma: f64,
}

fn success(r: &IterationRecord) -> bool {
    r.exec == ExecStatus::Executable && r.fitness.is_some_and(|f| f > 0.0)
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Incumbent fitness at the end of each trial: the best positive fitness, or 0.
pub fn trial_bests(records: &[IterationRecord], trial_count: usize) -> BTreeMap<usize, f64> {
    let mut bests: BTreeMap<usize, f64> = (0..trial_count).map(|t| (t, 0.0)).collect();
    for r in records {
        let best = bests.entry(r.trial).or_insert(0.0);
        if let (ExecStatus::Executable, Some(f)) = (r.exec, r.fitness) {
            if f > *best {
                *best = f;
            }
        }
    }
    bests
}

/// Folds a run log into a summary. `trial_count` covers trials that left no
/// records; the trial count used is the larger of it and the trials seen.
///
/// The repair loop only retries non-executable programs, so every repair
/// attempt of an iteration failed and at most its final program executed.
pub fn summarize_run(
    records: &[IterationRecord],
    trial_count: usize,
) -> Result<RunSummary, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let bests = trial_bests(records, trial_count);
    let trials = bests.len();
    let successful_trials: BTreeSet<usize> = records
        .iter()
        .filter(|r| success(r))
        .map(|r| r.trial)
        .collect();
    let programs: usize = records.iter().map(|r| r.repairs + 1).sum();
    let executable = records
        .iter()
        .filter(|r| r.exec == ExecStatus::Executable)
        .count();
    let values: Vec<f64> = bests.values().copied().collect();
    let (avg, best, sigma) = crate::env::grid::stats(&values);
    Ok(RunSummary {
        trials,
        iterations: records.len(),
        programs,
        s_iter: pct(records.iter().filter(|r| success(r)).count(), records.len()),
        s_trl: pct(successful_trials.len(), trials),
        exec_rate: pct(executable, programs),
        cost_usd: records.iter().map(|r| r.cost_usd).sum(),
        best_fitness: best,
        avg_fitness: avg,
        sigma,
    })
}

pub fn summary_markdown(label: &str, s: &RunSummary) -> String {
    summary_table_markdown(&[(label.to_string(), s.clone())])
}

/// One row per run.
pub fn summary_table_markdown(rows: &[(String, RunSummary)]) -> String {
    let mut out = String::new();
    out.push_str("| run | trials | iterations | S.Iter % | S.Trl % | exec % | cost USD | best | avg | sigma |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    for (label, s) in rows {
        let _ = writeln!(
            out,
            "| {label} | {} | {} | {:.1} | {:.1} | {:.1} | {:.6} | {} | {:.4} | {:.4} |",
            s.trials,
            s.iterations,
            s.s_iter,
            s.s_trl,
            s.exec_rate,
            s.cost_usd,
            s.best_fitness,
            s.avg_fitness,
            s.sigma
        );
    }
    out
}

pub fn summary_csv(rows: &[(String, RunSummary)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "run",
        "trials",
        "iterations",
        "programs",
        "s_iter",
        "s_trl",
        "exec_rate",
        "cost_usd",
        "best_fitness",
        "avg_fitness",
        "sigma",
    ])
    .expect("in-memory write");
    for (label, s) in rows {
        w.write_record([
            label.clone(),
            s.trials.to_string(),
            s.iterations.to_string(),
            s.programs.to_string(),
            s.s_iter.to_string(),
            s.s_trl.to_string(),
            s.exec_rate.to_string(),
            s.cost_usd.to_string(),
            s.best_fitness.to_string(),
            s.avg_fitness.to_string(),
            s.sigma.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Best results of each model in one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainResults {
    pub domain: String,
    /// Distance-like domains rank the smallest value first.
    pub lower_is_better: bool,
    pub results: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub models: Vec<String>,
    pub domains: Vec<String>,
    /// `ranks[m][d]`: rank of model `m` in domain `d`.
    pub ranks: Vec<Vec<u32>>,
    pub average: Vec<f64>,
    pub overall: Vec<u32>,
}

/// Standard competition ranking: one plus the number of strictly better
/// entries. `None` entries rank after every present one.
fn competition_ranks(values: &[Option<f64>], lower_is_better: bool) -> Vec<u32> {
    let better = |a: f64, b: f64| if lower_is_better { a < b } else { a > b };
    let present = values.iter().flatten().count() as u32;
    values
        .iter()
        .map(|v| match v {
            Some(x) => 1 + values.iter().flatten().filter(|&&y| better(y, *x)).count() as u32,
            None => 1 + present,
        })
        .collect()
}

/// Ranks `models` within each domain, averages the ranks and assigns the
/// overall rank by ascending average, with ties sharing a rank.
pub fn aggregate_ranks(
    models: &[String],
    domains: &[DomainResults],
) -> Result<RankTable, MetricsError> {
    if models.is_empty() || domains.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut ranks = vec![Vec::with_capacity(domains.len()); models.len()];
    for d in domains {
        let values: Vec<Option<f64>> = models.iter().map(|m| d.results.get(m).copied()).collect();
        for (m, r) in competition_ranks(&values, d.lower_is_better)
            .into_iter()
            .enumerate()
        {
            ranks[m].push(r);
        }
    }
    // Every model has one rank per domain, so comparing integer sums is the
    // same as comparing averages without float ties.
    let sums: Vec<u32> = ranks.iter().map(|r| r.iter().sum()).collect();
    let overall = competition_ranks(
        &sums.iter().map(|&s| Some(s as f64)).collect::<Vec<_>>(),
        true,
    );
    Ok(RankTable {
        models: models.to_vec(),
        domains: domains.iter().map(|d| d.domain.clone()).collect(),
        average: sums
            .iter()
            .map(|&s| s as f64 / domains.len() as f64)
            .collect(),
        ranks,
        overall,
    })
}

pub fn rank_markdown(t: &RankTable) -> String {
    let mut out = String::from("| model |");
    for d in &t.domains {
        let _ = write!(out, " {d} |");
    }
    out.push_str(" avg rank | rank |\n|---|");
    out.push_str(&"---|".repeat(t.domains.len() + 2));
    out.push('\n');
    for (m, model) in t.models.iter().enumerate() {
        let _ = write!(out, "| {model} |");
        for r in &t.ranks[m] {
            let _ = write!(out, " {r} |");
        }
        let _ = writeln!(out, " {:.2} | {} |", t.average[m], t.overall[m]);
    }
    out
}

pub fn rank_csv(t: &RankTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string()];
    header.extend(t.domains.iter().cloned());
    header.extend(["avg_rank".to_string(), "rank".to_string()]);
    w.write_record(&header).expect("in-memory write");
    for (m, model) in t.models.iter().enumerate() {
        let mut row = vec![model.clone()];
        row.extend(t.ranks[m].iter().map(|r| r.to_string()));
        row.push(t.average[m].to_string());
        row.push(t.overall[m].to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub trial: usize,
    pub iteration: usize,
    pub best_fitness: f64,
}

/// Best-so-far fitness per trial and iteration. Trials below `trial_count`
/// without records get a single point at iteration 0 with fitness 0.
pub fn reward_curves(records: &[IterationRecord], trial_count: usize) -> Vec<CurvePoint> {
    let mut by_trial: BTreeMap<usize, Vec<&IterationRecord>> =
        (0..trial_count).map(|t| (t, Vec::new())).collect();
    for r in records {
        by_trial.entry(r.trial).or_default().push(r);
    }
    let mut points = Vec::with_capacity(records.len() + trial_count);
    for (trial, mut recs) in by_trial {
        if recs.is_empty() {
            points.push(CurvePoint {
                trial,
                iteration: 0,
                best_fitness: 0.0,
            });
            continue;
        }
        recs.sort_by_key(|r| r.iteration);
        let mut best = 0.0;
        for r in recs {
            if let (ExecStatus::Executable, Some(f)) = (r.exec, r.fitness) {
                if f > best {
                    best = f;
                }
            }
            points.push(CurvePoint {
                trial,
                iteration: r.iteration,
                best_fitness: best,
            });
        }
    }
    points
}

pub fn curves_csv(points: &[CurvePoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
