//! Hill-climbing search over source programs proposed by a language model.
//!
//! The search loop lives in [`search`]; candidates run in a supervised child
//! process ([`sandbox`]) against the task environments in [`env`]. Providers
//! ([`provider`]) may be live HTTP clients or deterministic replays, which
//! makes whole experiments reproducible. [`metrics`] turns run logs into
//! summary tables, rank tables and reward curves.

pub mod env;
pub mod metrics;
pub mod program;
pub mod prompt;
pub mod provider;
pub mod runlog;
pub mod runner;
pub mod sandbox;
pub mod search;
pub mod stub;
pub mod tasks;

pub use program::{program_sha, CandidateProgram, ExecStatus, Fault};
pub use prompt::{PromptBundle, PromptKind};
pub use provider::{ChatExchange, Provider, ProviderConfig, ProviderError};
pub use runlog::IterationRecord;
pub use runner::ProgramRunner;
pub use sandbox::{SandboxConfig, SandboxError, SandboxHandle};
pub use search::{
    program_search, query_llm_with_repair, run_experiment, ExperimentResult, SearchConfig,
    SearchError, SearchState, TrialResult,
};
pub use tasks::{task_by_name, Evaluation, EvaluationResult, Task, TaskError};
