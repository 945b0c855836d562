//! Hill-climbing program search with model-driven repair.
//!
//! A trial keeps a single incumbent. Each iteration asks the model for a
//! program (an initial prompt while there is no incumbent, an improve prompt
//! afterwards), repairs it while it fails the executability check, runs it on
//! the task and replaces the incumbent only on strict improvement.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::{CandidateProgram, ExecStatus, Fault};
use crate::prompt::PromptBundle;
use crate::provider::{extract_code, ChatExchange, Provider, ProviderError};
use crate::runlog::IterationRecord;
use crate::runner::ProgramRunner;
use crate::tasks::{Evaluation, EvaluationResult, Task, TaskError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub trials: usize,
    pub iterations: usize,
    pub max_repairs: usize,
    pub seed: u64,
    /// Stop a trial early once the incumbent reaches this fitness.
    pub target_fitness: Option<f64>,
    /// Episodes per evaluation; `None` uses the task default.
    pub eval_episodes: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            trials: 10,
            iterations: 10,
            max_repairs: 3,
            seed: 0,
            target_fitness: None,
            eval_episodes: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |what: &str| Err(SearchError::Config(format!("{what} must be at least 1")));
        if self.trials == 0 {
            return bad("trials");
        }
        if self.iterations == 0 {
            return bad("iterations");
        }
        if self.max_repairs == 0 {
            return bad("max_repairs");
        }
        if self.eval_episodes == Some(0) {
            return bad("eval_episodes");
        }
        if self.target_fitness.is_some_and(|t| !t.is_finite()) {
            return Err(SearchError::Config("target_fitness must be finite".into()));
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("cannot start runner: {0}")]
    Runner(String),
}

/// The incumbent of one trial.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub best_program: Option<CandidateProgram>,
    /// Zero until a program with positive fitness appears.
    pub best_fitness: f64,
    pub best_result: Option<EvaluationResult>,
}

/// Program returned by the repair loop, before it is run on the task.
#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub program: CandidateProgram,
    pub exchanges: Vec<ChatExchange>,
}

fn ask(
    provider: &dyn Provider,
    prompt: &PromptBundle,
) -> Result<(String, ChatExchange), ProviderError> {
    let ex = provider.chat(prompt)?;
    // A reply without any code is kept as an empty program; it fails the
    // executability check like any other broken candidate.
    let source = extract_code(&ex.response_text).unwrap_or_default();
    Ok((source, ex))
}

/// Loads the program and runs one smoke invocation.
pub fn can_exec(
    source: &str,
    task: &dyn Task,
    runner: &mut dyn ProgramRunner,
) -> Result<(), Fault> {
    runner.load(&crate::program::program_sha(source), source, task.entry())?;
    task.smoke(runner)
}

/// Queries the model once, then keeps asking for repairs while the program
/// fails [`can_exec`], making at most `max_repairs` calls in total. The last
/// program is returned whether or not it works; it is not checked again.
pub fn query_llm_with_repair(
    prompt: &PromptBundle,
    max_repairs: usize,
    provider: &dyn Provider,
    task: &dyn Task,
    runner: &mut dyn ProgramRunner,
) -> Result<QueryOutcome, ProviderError> {
    let (mut source, ex) = ask(provider, prompt)?;
    let mut exchanges = vec![ex];
    let mut last_error = None;
    let mut j = 1;
    while j < max_repairs {
        match can_exec(&source, task, runner) {
            Ok(()) => {
                last_error = None;
                break;
            }
            Err(fault) => {
                log::debug!("repair {j}: {}", fault.status);
                let repair = task.repair(&source, &fault.detail);
                last_error = Some(fault.to_string());
                let (next, ex) = ask(provider, &repair)?;
                source = next;
                exchanges.push(ex);
                j += 1;
            }
        }
    }
    let mut program = CandidateProgram::new(source, 0, 0, j - 1);
    program.error = last_error;
    Ok(QueryOutcome { program, exchanges })
}

/// Loads the program and evaluates it on the task.
pub fn inject_and_run(
    program: &CandidateProgram,
    task: &dyn Task,
    runner: &mut dyn ProgramRunner,
    seed: u64,
    episodes: usize,
) -> Result<Evaluation, Fault> {
    runner.load(&program.program_id, &program.source, task.entry())?;
    task.evaluate(runner, seed, episodes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub candidates: Vec<CandidateProgram>,
    pub exchanges: Vec<ChatExchange>,
    /// Incumbent fitness after each iteration.
    pub curve: Vec<f64>,
    pub state: SearchState,
    /// Set when the provider failed and the trial stopped early.
    pub aborted: Option<String>,
}

impl TrialResult {
    pub fn best(&self) -> Option<&CandidateProgram> {
        self.state.best_program.as_ref()
    }
}

/// Runs one trial. Runner failures are recorded and never abort; an
/// unavailable or exhausted provider ends the trial with a partial log;
/// authentication and configuration errors propagate.
pub fn program_search(
    task: &dyn Task,
    config: &SearchConfig,
    provider: &dyn Provider,
    runner: &mut dyn ProgramRunner,
    trial: usize,
) -> Result<TrialResult, SearchError> {
    config.validate()?;
    let seed = config.trial_seed(trial);
    let episodes = config
        .eval_episodes
        .unwrap_or_else(|| task.default_episodes());
    let deterministic = provider.is_deterministic();
    let mut state = SearchState::default();
    let mut out = TrialResult {
        trial,
        seed,
        records: Vec::new(),
        candidates: Vec::new(),
        exchanges: Vec::new(),
        curve: Vec::new(),
        state: SearchState::default(),
        aborted: None,
    };
    let initial = task.initial_prompt();
    for iteration in 1..=config.iterations {
        let started = Instant::now();
        let prompt = match &state.best_program {
            None => initial.clone(),
            Some(_) => task.improve_prompt(&state)?,
        };
        let outcome =
            match query_llm_with_repair(&prompt, config.max_repairs, provider, task, runner) {
                Ok(o) => o,
                Err(e @ (ProviderError::Unavailable(_) | ProviderError::ReplayExhausted(_))) => {
                    log::warn!("trial {trial} stopped at iteration {iteration}: {e}");
                    out.aborted = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e.into()),
            };
        let mut program = outcome.program;
        program.trial = trial;
        program.iteration = iteration;
        let evaluation = inject_and_run(&program, task, runner, seed, episodes);
        match &evaluation {
            Ok(eval) => {
                program.exec_status = ExecStatus::Executable;
                program.fitness = Some(eval.fitness);
                program.error = None;
            }
            Err(fault) => {
                program.exec_status = fault.status;
                program.fitness = None;
                program.error = Some(fault.to_string());
            }
        }
        let ms = if deterministic {
            0
        } else {
            started.elapsed().as_millis() as u64
        };
        out.records.push(IterationRecord {
            trial,
            iteration,
            repairs: program.repair_count,
            program_sha: program.program_id.clone(),
            exec: program.exec_status,
            fitness: program.fitness,
            tokens_in: outcome.exchanges.iter().map(|e| e.tokens_in).sum(),
            tokens_out: outcome.exchanges.iter().map(|e| e.tokens_out).sum(),
            cost_usd: outcome.exchanges.iter().map(|e| e.cost_usd).sum(),
            ms,
        });
        log::info!(
            "trial {trial} iteration {iteration}: {} fitness {:?} after {} repairs",
            program.exec_status,
            program.fitness,
            program.repair_count
        );
        if let Ok(eval) = evaluation {
            if eval.fitness > state.best_fitness {
                state.best_fitness = eval.fitness;
                state.best_program = Some(program.clone());
                state.best_result = Some(eval.result);
            }
        }
        out.exchanges.extend(outcome.exchanges);
        out.candidates.push(program);
        out.curve.push(state.best_fitness);
        if config
            .target_fitness
            .is_some_and(|t| state.best_program.is_some() && state.best_fitness >= t)
        {
            log::info!("trial {trial} reached the target fitness at iteration {iteration}");
            break;
        }
    }
    out.state = state;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub task: String,
    pub config: SearchConfig,
    pub trials: Vec<TrialResult>,
    /// Best program across trials; ties go to the earliest trial.
    pub recommendation: Option<CandidateProgram>,
}

impl ExperimentResult {
    pub fn records(&self) -> Vec<IterationRecord> {
        self.trials
            .iter()
            .flat_map(|t| t.records.iter().cloned())
            .collect()
    }

    pub fn exchanges(&self) -> impl Iterator<Item = &ChatExchange> {
        self.trials.iter().flat_map(|t| t.exchanges.iter())
    }

    pub fn best_fitness(&self) -> f64 {
        self.recommendation
            .as_ref()
            .map_or(0.0, |p| p.effective_fitness())
    }
}

/// Picks the best incumbent; on equal fitness the earlier trial wins, and
/// within a trial the incumbent is already the earliest iteration to reach
/// its fitness.
pub fn recommend(trials: &[TrialResult]) -> Option<CandidateProgram> {
    let mut best: Option<&CandidateProgram> = None;
    for t in trials {
        if let Some(p) = t.best() {
            let better = best.is_none_or(|b| {
                p.effective_fitness() > b.effective_fitness()
                    || (p.effective_fitness() == b.effective_fitness()
                        && (p.trial, p.iteration) < (b.trial, b.iteration))
            });
            if better {
                best = Some(p);
            }
        }
    }
    best.cloned()
}

/// Creates the runner a trial will own.
pub type RunnerFactory<'a> =
    dyn Fn(usize) -> Result<Box<dyn ProgramRunner>, SearchError> + Sync + 'a;

/// Runs `config.trials` independent trials, each with a fresh incumbent and
/// its own runner. With `parallel > 1` trials run on that many threads; the
/// provider then sees calls in a nondeterministic order.
///
/// Fails only when the provider was unavailable for every trial before any
/// iteration completed, or on authentication and configuration errors.
pub fn run_experiment(
    task: &dyn Task,
    config: &SearchConfig,
    provider: &dyn Provider,
    make_runner: &RunnerFactory<'_>,
    parallel: usize,
) -> Result<ExperimentResult, SearchError> {
    config.validate()?;
    let run_trial = |trial: usize| -> Result<TrialResult, SearchError> {
        let mut runner = make_runner(trial)?;
        program_search(task, config, provider, runner.as_mut(), trial)
    };
    let mut results: Vec<TrialResult> = if parallel <= 1 {
        (0..config.trials)
            .map(run_trial)
            .collect::<Result<_, _>>()?
    } else {
        let next = AtomicUsize::new(0);
        let collected = Mutex::new(Vec::new());
        std::thread::scope(|s| {
            for _ in 0..parallel.min(config.trials) {
                s.spawn(|| loop {
                    let trial = next.fetch_add(1, Ordering::SeqCst);
                    if trial >= config.trials {
                        break;
                    }
                    let r = run_trial(trial);
                    collected.lock().unwrap().push((trial, r));
                });
            }
        });
        let mut collected = collected.into_inner().unwrap();
        collected.sort_by_key(|(t, _)| *t);
        collected
            .into_iter()
            .map(|(_, r)| r)
            .collect::<Result<_, _>>()?
    };
    results.sort_by_key(|t| t.trial);
    if results
        .iter()
        .all(|t| t.records.is_empty() && t.aborted.is_some())
    {
        let reason = results[0].aborted.clone().unwrap_or_default();
        return Err(SearchError::Provider(ProviderError::Unavailable(reason)));
    }
    Ok(ExperimentResult {
        task: task.name().to_string(),
        config: config.clone(),
        recommendation: recommend(&results),
        trials: results,
    })
}
