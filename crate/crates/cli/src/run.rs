use std::fs;
use std::path::{Path, PathBuf};

use llmsearch::env::vehicle::{sweep_markdown, sweep_omega, SweepError};
use llmsearch::metrics::{curves_csv, reward_curves, summarize_run, summary_markdown};
use llmsearch::provider::CassetteEntry;
use llmsearch::runlog::{read_log, to_jsonl, write_atomic};
use llmsearch::{
    run_experiment, task_by_name, EvaluationResult, ExperimentResult, IterationRecord,
    ProgramRunner, Provider, SandboxConfig, SandboxHandle, SearchError,
};

use crate::config::{resolve_provider, FileConfig, RunManifest, DEFAULT_OMEGA};
use crate::error::{io_failed, CliError};
use crate::RunArgs;

/// Command line of the built-in stub runner: this executable in stub mode.
fn self_stub_command() -> Result<Vec<String>, CliError> {
    let exe = std::env::current_exe().map_err(|e| io_failed("cannot locate own executable", e))?;
    Ok(vec![
        exe.to_string_lossy().into_owned(),
        "stub-runner".into(),
    ])
}

fn effective_sandbox(sandbox: &SandboxConfig) -> Result<SandboxConfig, CliError> {
    let mut c = sandbox.clone();
    if c.runner_command.is_empty() {
        c.runner_command = self_stub_command()?;
    }
    c.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(c)
}

/// Merges flags over the config file into a manifest. The provider fields
/// are filled in later.
fn build_manifest(args: &RunArgs, task: &str, file: &FileConfig) -> Result<RunManifest, CliError> {
    let mut search = file.search.clone().unwrap_or_default();
    if let Some(v) = args.trials {
        search.trials = v;
    }
    if let Some(v) = args.iterations {
        search.iterations = v;
    }
    if let Some(v) = args.max_repairs {
        search.max_repairs = v;
    }
    if let Some(v) = args.seed {
        search.seed = v;
    }
    if args.target_fitness.is_some() {
        search.target_fitness = args.target_fitness;
    }
    if args.episodes.is_some() {
        search.eval_episodes = args.episodes;
    }
    search.validate()?;

    let mut sandbox = file.sandbox.clone().unwrap_or_default();
    if let Some(cmd) = &args.runner {
        sandbox.runner_command = cmd.split_whitespace().map(String::from).collect();
        if sandbox.runner_command.is_empty() {
            return Err(CliError::Config("--runner is empty".into()));
        }
    }
    if let Some(ms) = args.call_timeout_ms {
        sandbox.call_timeout_ms = ms;
    }
    if let Some(ms) = args.load_timeout_ms {
        sandbox.load_timeout_ms = ms;
    }
    let omega = args.omega.or(file.task.omega).unwrap_or(DEFAULT_OMEGA);
    if !(omega.is_finite() && omega > 0.0) {
        return Err(CliError::Config(format!(
            "omega must be positive, got {omega}"
        )));
    }
    task_by_name(task, omega)?;
    Ok(RunManifest {
        task: task.to_ascii_lowercase(),
        omega,
        provider: String::new(),
        pricing: Default::default(),
        search,
        sandbox,
    })
}

/// Runs the experiment described by `manifest` against `provider` and
/// writes every artifact into `out`.
pub fn execute(
    manifest: &RunManifest,
    provider: &dyn Provider,
    parallel: usize,
    out: &Path,
) -> Result<ExperimentResult, CliError> {
    let task = task_by_name(&manifest.task, manifest.omega)?;
    let sandbox = effective_sandbox(&manifest.sandbox)?;
    let make_runner = |_trial: usize| -> Result<Box<dyn ProgramRunner>, SearchError> {
        SandboxHandle::spawn(sandbox.clone())
            .map(|h| Box::new(h) as Box<dyn ProgramRunner>)
            .map_err(|e| SearchError::Runner(e.to_string()))
    };
    fs::create_dir_all(out)
        .map_err(|e| io_failed(&format!("cannot create {}", out.display()), e))?;
    log::info!(
        "running {} trials x {} iterations of {} with {}",
        manifest.search.trials,
        manifest.search.iterations,
        manifest.task,
        manifest.provider
    );
    let result = run_experiment(
        task.as_ref(),
        &manifest.search,
        provider,
        &make_runner,
        parallel.max(1),
    )?;
    write_artifacts(manifest, &result, out)?;
    Ok(result)
}

fn write(out: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = out.join(name);
    write_atomic(&path, bytes)
        .map_err(|e| io_failed(&format!("cannot write {}", path.display()), e))
}

fn write_artifacts(
    manifest: &RunManifest,
    result: &ExperimentResult,
    out: &Path,
) -> Result<(), CliError> {
    let records = result.records();
    let trials = manifest.search.trials;
    let mut manifest_json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    manifest_json.push('\n');
    write(out, "config.json", manifest_json.as_bytes())?;
    write(out, "log.jsonl", to_jsonl(&records).as_bytes())?;
    let cassette: Vec<CassetteEntry> = result.exchanges().map(CassetteEntry::from).collect();
    write(
        out,
        "cassette.jsonl",
        llmsearch::provider::cassette_jsonl(&cassette).as_bytes(),
    )?;
    write(
        out,
        "curves.csv",
        curves_csv(&reward_curves(&records, trials)).as_bytes(),
    )?;
    if let Ok(summary) = summarize_run(&records, trials) {
        write(
            out,
            "summary.md",
            summary_markdown(&manifest.label(), &summary).as_bytes(),
        )?;
    }
    let aborted: Vec<String> = result
        .trials
        .iter()
        .filter_map(|t| {
            t.aborted
                .as_ref()
                .map(|a| format!("trial {}: {a}", t.trial))
        })
        .collect();
    for a in &aborted {
        log::warn!("{a}");
    }
    if let Some(best) = &result.recommendation {
        let mut json = serde_json::to_string_pretty(best).expect("candidate serializes");
        json.push('\n');
        write(out, "best.json", json.as_bytes())?;
        write(out, "best.py", best.source.as_bytes())?;
    }
    Ok(())
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let task = args
        .task
        .as_deref()
        .ok_or_else(|| CliError::Config("--task is required".into()))?;
    let file = FileConfig::load(args.config.as_deref())?;
    let mut manifest = build_manifest(args, task, &file)?;
    let provider_spec = args
        .provider
        .as_deref()
        .ok_or_else(|| CliError::Config("--provider is required".into()))?;
    let out = args
        .out
        .as_deref()
        .ok_or_else(|| CliError::Config("--out is required".into()))?;
    let resolved = resolve_provider(provider_spec, &file)?;
    manifest.provider = resolved.name;
    manifest.pricing = resolved.pricing;
    let result = execute(
        &manifest,
        resolved.provider.as_ref(),
        args.parallel_trials,
        out,
    )?;
    print_outcome(&manifest, &result, out);
    Ok(())
}

fn print_outcome(manifest: &RunManifest, result: &ExperimentResult, out: &Path) {
    if let Ok(s) = summarize_run(&result.records(), manifest.search.trials) {
        print!("{}", summary_markdown(&manifest.label(), &s));
    } else {
        println!("no iterations completed");
    }
    if let Some(best) = &result.recommendation {
        println!(
            "best fitness {} (trial {}, iteration {})",
            best.effective_fitness(),
            best.trial,
            best.iteration
        );
    }
    println!("artifacts in {}", out.display());
}

/// Re-executes a run from its manifest and cassette and compares the new
/// log with the recorded one. Wall times are ignored in the comparison.
pub fn cmd_replay(run_dir: &Path, out: &Path, parallel: usize) -> Result<bool, CliError> {
    let manifest = RunManifest::read(run_dir)?;
    let cassette = run_dir.join("cassette.jsonl");
    let provider =
        llmsearch::provider::ReplayProvider::from_file(manifest.provider.clone(), &cassette)?
            .with_pricing(manifest.pricing);
    if out == run_dir {
        return Err(CliError::Config(
            "replay output must differ from the run directory".into(),
        ));
    }
    execute(&manifest, &provider, parallel, out)?;
    let original =
        read_log(&run_dir.join("log.jsonl")).map_err(|e| CliError::Config(e.to_string()))?;
    let replayed = read_log(&out.join("log.jsonl")).map_err(|e| CliError::Failed(e.to_string()))?;
    let strip = |rs: Vec<IterationRecord>| -> Vec<IterationRecord> {
        rs.into_iter()
            .map(|r| IterationRecord { ms: 0, ..r })
            .collect()
    };
    let (original, replayed) = (strip(original), strip(replayed));
    match original.iter().zip(&replayed).position(|(a, b)| a != b) {
        None if original.len() == replayed.len() => {
            println!("replay matches: {} records", original.len());
            Ok(true)
        }
        None => {
            println!(
                "replay differs: {} records recorded, {} replayed",
                original.len(),
                replayed.len()
            );
            Ok(false)
        }
        Some(i) => {
            println!("replay differs at record {}", i + 1);
            Ok(false)
        }
    }
}

/// Vehicle-task searches across rotation speeds, one run directory each.
pub fn cmd_sweep(args: &RunArgs, omegas: &[f64]) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let provider_spec = args
        .provider
        .as_deref()
        .ok_or_else(|| CliError::Config("--provider is required".into()))?;
    let out = args
        .out
        .as_deref()
        .ok_or_else(|| CliError::Config("--out is required".into()))?;
    let mut base = build_manifest(args, "vehicle", &file)?;
    // Validate every omega before spending provider calls.
    if let Some(bad) = omegas.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(CliError::Config(format!(
            "omega must be positive, got {bad}"
        )));
    }
    let mut label = String::new();
    let row = sweep_omega("", omegas, |omega| -> Result<Option<f64>, CliError> {
        // A fresh provider per omega so a cassette is replayed from its start.
        let resolved = resolve_provider(provider_spec, &file)?;
        base.provider = resolved.name;
        base.pricing = resolved.pricing;
        base.omega = omega;
        label = base.provider.clone();
        let dir: PathBuf = out.join(format!("omega-{omega}"));
        let result = execute(
            &base,
            resolved.provider.as_ref(),
            args.parallel_trials,
            &dir,
        )?;
        Ok(best_distance(&result))
    })
    .map_err(|e| match e {
        SweepError::Empty(e) => CliError::Config(e.to_string()),
        SweepError::Search(e) => e,
    })?;
    let row = llmsearch::env::vehicle::SweepRow { label, ..row };
    let table = sweep_markdown(std::slice::from_ref(&row));
    fs::create_dir_all(out).map_err(|e| io_failed("cannot create output directory", e))?;
    write(out, "sweep.md", table.as_bytes())?;
    print!("{table}");
    Ok(())
}

/// Mean minimum distance of the recommended driver.
fn best_distance(result: &ExperimentResult) -> Option<f64> {
    let best = result.recommendation.as_ref()?;
    let trial = result.trials.iter().find(|t| t.trial == best.trial)?;
    match &trial.state.best_result {
        Some(EvaluationResult::Vehicle(r)) => Some(r.d_avg),
        _ => None,
    }
}
