//! Supervision of the child process that executes candidate programs.
//!
//! The child speaks the line protocol in [`protocol`]. Every request gets
//! exactly one answer: a typed response or a classified [`Fault`]. A child
//! that overruns its deadline is killed and reaped before the request
//! returns, so a candidate can never block the harness longer than the
//! applicable timeout plus the kill itself.

pub mod protocol;

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::program::{ExecStatus, Fault};
use crate::runner::{action_token, artifact_grid, IntGrid, ProgramRunner};
use protocol::{GenerateParams, Message, PROTOCOL_VERSION};

const STDERR_TAIL_LINES: usize = 40;
const SHUTDOWN_GRACE: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    pub runner_command: Vec<String>,
    pub load_timeout_ms: u64,
    pub call_timeout_ms: u64,
    pub max_restart_attempts: u32,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            runner_command: Vec::new(),
            load_timeout_ms: 10_000,
            call_timeout_ms: 2_000,
            max_restart_attempts: 1,
        }
    }
}

impl SandboxConfig {
    pub fn new(runner_command: Vec<String>) -> Self {
        Self {
            runner_command,
            ..Self::default()
        }
    }

    pub fn load_timeout(&self) -> Duration {
        Duration::from_millis(self.load_timeout_ms)
    }

    pub fn call_timeout(&self) -> Duration {
        Duration::from_millis(self.call_timeout_ms)
    }

    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.runner_command.is_empty() {
            return Err(SandboxError::Config("runner command is empty".into()));
        }
        if self.load_timeout_ms == 0 || self.call_timeout_ms == 0 {
            return Err(SandboxError::Config("timeouts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("invalid sandbox config: {0}")]
    Config(String),
    #[error("failed to spawn runner `{command}`: {source}")]
    SpawnFailure {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("runner did not send ready within {0:?}")]
    HandshakeTimeout(Duration),
    #[error("runner speaks protocol {got}, expected {expected}")]
    ProtocolVersionMismatch { got: u32, expected: u32 },
    #[error("protocol error during handshake: {0}")]
    Protocol(String),
    #[error("runner exited during handshake: {0}")]
    Crash(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RequestKind {
    Load,
    Act,
    Generate,
}

/// Per-request classification counts. `Executable` marks a typed response.
pub type RequestStats = BTreeMap<(RequestKind, ExecStatus), u64>;

struct ChildProc {
    child: Child,
    to_child: Option<Sender<String>>,
    from_child: Receiver<String>,
    stderr_tail: Arc<Mutex<VecDeque<String>>>,
}

impl ChildProc {
    fn start(config: &SandboxConfig) -> Result<ChildProc, SandboxError> {
        let (program, args) = config
            .runner_command
            .split_first()
            .ok_or_else(|| SandboxError::Config("runner command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| SandboxError::SpawnFailure {
                command: config.runner_command.join(" "),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");

        let (to_child, writer_rx) = mpsc::channel::<String>();
        thread::spawn(move || writer_loop(stdin, writer_rx));

        let (reader_tx, from_child) = mpsc::channel::<String>();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if reader_tx.send(line).is_err() {
                    break;
                }
            }
        });

        let stderr_tail = Arc::new(Mutex::new(VecDeque::new()));
        let tail = Arc::clone(&stderr_tail);
        let pid = child.id();
        thread::spawn(move || {
            for line in BufReader::new(stderr).lines() {
                let Ok(line) = line else { break };
                log::debug!("runner[{pid}] stderr: {line}");
                let mut tail = tail.lock().unwrap();
                if tail.len() == STDERR_TAIL_LINES {
                    tail.pop_front();
                }
                tail.push_back(line);
            }
        });

        Ok(ChildProc {
            child,
            to_child: Some(to_child),
            from_child,
            stderr_tail,
        })
    }

    fn send(&self, msg: &Message) -> bool {
        match &self.to_child {
            Some(tx) => tx.send(msg.to_line()).is_ok(),
            None => false,
        }
    }

    fn recv(&self, timeout: Duration) -> Result<String, RecvTimeoutError> {
        self.from_child.recv_timeout(timeout)
    }

    fn kill(&mut self) {
        self.to_child = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn reap_crashed(&mut self) -> String {
        self.to_child = None;
        // stdout closed; give the process a moment to finish exiting
        let deadline = Instant::now() + Duration::from_millis(200);
        let status = loop {
            match self.child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                _ => {
                    let _ = self.child.kill();
                    break self.child.wait().ok();
                }
            }
        };
        // let the stderr thread drain what the child wrote before dying
        thread::sleep(Duration::from_millis(10));
        let tail: Vec<String> = self.stderr_tail.lock().unwrap().iter().cloned().collect();
        let mut detail = match status {
            Some(s) => format!("runner exited ({s})"),
            None => "runner exited".to_string(),
        };
        if !tail.is_empty() {
            detail.push_str("\nstderr:\n");
            detail.push_str(&tail.join("\n"));
        }
        detail
    }
}

fn writer_loop(mut stdin: ChildStdin, rx: Receiver<String>) {
    for line in rx {
        if stdin.write_all(line.as_bytes()).is_err() || stdin.flush().is_err() {
            break;
        }
    }
}

#[derive(Debug, Clone)]
struct LoadedProgram {
    program_id: String,
    source: String,
    entry: String,
}

/// Single-owner handle to one runner process.
///
/// The process is reused across programs; after a kill (timeout, protocol
/// violation) or a crash it is respawned lazily by the next load.
pub struct SandboxHandle {
    config: SandboxConfig,
    proc: Option<ChildProc>,
    loaded: Option<LoadedProgram>,
    restarts_used: u32,
    protocol_version: u32,
    stats: RequestStats,
}

enum Reply {
    Message(Message),
    Fault(Fault),
}

impl SandboxHandle {
    /// Starts the runner and waits for its `ready` handshake.
    pub fn spawn(config: SandboxConfig) -> Result<SandboxHandle, SandboxError> {
        config.validate()?;
        let mut handle = SandboxHandle {
            config,
            proc: None,
            loaded: None,
            restarts_used: 0,
            protocol_version: 0,
            stats: RequestStats::new(),
        };
        handle.start_process()?;
        Ok(handle)
    }

    fn start_process(&mut self) -> Result<(), SandboxError> {
        let mut proc = ChildProc::start(&self.config)?;
        let timeout = self.config.load_timeout();
        let line = match proc.recv(timeout) {
            Ok(line) => line,
            Err(RecvTimeoutError::Timeout) => {
                proc.kill();
                return Err(SandboxError::HandshakeTimeout(timeout));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let detail = proc.reap_crashed();
                return Err(SandboxError::Crash(detail));
            }
        };
        match Message::parse(&line) {
            Ok(Message::Ready { protocol }) if protocol == PROTOCOL_VERSION => {
                self.protocol_version = protocol;
                self.proc = Some(proc);
                Ok(())
            }
            Ok(Message::Ready { protocol }) => {
                proc.kill();
                Err(SandboxError::ProtocolVersionMismatch {
                    got: protocol,
                    expected: PROTOCOL_VERSION,
                })
            }
            Ok(other) => {
                proc.kill();
                Err(SandboxError::Protocol(format!(
                    "expected ready, got {}",
                    other.kind()
                )))
            }
            Err(e) => {
                proc.kill();
                Err(SandboxError::Protocol(format!(
                    "unparseable handshake line {line:?}: {e}"
                )))
            }
        }
    }

    pub fn protocol_version(&self) -> u32 {
        self.protocol_version
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    /// Process id of the live runner, if any.
    pub fn pid(&self) -> Option<u32> {
        self.proc.as_ref().map(|p| p.child.id())
    }

    pub fn is_alive(&mut self) -> bool {
        match &mut self.proc {
            Some(p) => matches!(p.child.try_wait(), Ok(None)),
            None => false,
        }
    }

    pub fn stats(&self) -> &RequestStats {
        &self.stats
    }

    /// Total number of requests sent over the lifetime of the handle.
    pub fn requests_sent(&self) -> u64 {
        self.stats.values().sum()
    }

    fn record(&mut self, kind: RequestKind, status: ExecStatus) {
        *self.stats.entry((kind, status)).or_insert(0) += 1;
    }

    fn request(&mut self, msg: &Message, timeout: Duration) -> Reply {
        let Some(proc) = self.proc.as_mut() else {
            return Reply::Fault(Fault::crash("runner is not running"));
        };
        if !proc.send(msg) {
            let detail = proc.reap_crashed();
            self.proc = None;
            return Reply::Fault(Fault::crash(detail));
        }
        match proc.recv(timeout) {
            Ok(line) => match Message::parse(&line) {
                Ok(reply) => Reply::Message(reply),
                Err(e) => {
                    proc.kill();
                    self.proc = None;
                    Reply::Fault(Fault::protocol(format!(
                        "unparseable runner output {line:?}: {e}"
                    )))
                }
            },
            Err(RecvTimeoutError::Timeout) => {
                proc.kill();
                self.proc = None;
                Reply::Fault(Fault::timeout(format!(
                    "no response to {} within {} ms; runner killed",
                    msg.kind(),
                    timeout.as_millis()
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let detail = proc.reap_crashed();
                self.proc = None;
                Reply::Fault(Fault::crash(detail))
            }
        }
    }

    fn unexpected(&mut self, expected: &str, got: &Message) -> Fault {
        if let Some(mut proc) = self.proc.take() {
            proc.kill();
        }
        Fault::protocol(format!("expected {expected}, got {}", got.kind()))
    }

    fn send_load(&mut self) -> Result<(), Fault> {
        let program = self
            .loaded
            .clone()
            .expect("load requested without a program");
        if self.proc.is_none() {
            self.start_process()
                .map_err(|e| Fault::crash(format!("runner restart failed: {e}")))?;
        }
        let msg = Message::Load {
            program_id: program.program_id,
            source: program.source,
            entry: program.entry,
        };
        let timeout = self.config.load_timeout();
        match self.request(&msg, timeout) {
            Reply::Message(Message::Loaded { ok: true, .. }) => Ok(()),
            Reply::Message(Message::Loaded { ok: false, error }) => Err(Fault::syntax(
                error.unwrap_or_else(|| "load failed without diagnostic".into()),
            )),
            Reply::Message(Message::Error { stage, trace }) => Err(Fault::protocol(format!(
                "runner error at stage {stage}: {trace}"
            ))),
            Reply::Message(other) => Err(self.unexpected("loaded", &other)),
            Reply::Fault(f) => Err(f),
        }
    }

    /// Loads a program. A `SyntaxError` fault carries the runner's
    /// diagnostic verbatim.
    pub fn load_program(
        &mut self,
        program_id: &str,
        source: &str,
        entry: &str,
    ) -> Result<(), Fault> {
        self.loaded = Some(LoadedProgram {
            program_id: program_id.to_string(),
            source: source.to_string(),
            entry: entry.to_string(),
        });
        self.restarts_used = 0;
        let out = self.send_load();
        self.record(RequestKind::Load, classify(&out));
        out
    }

    pub fn request_action(&mut self, state: &Value, step: u64) -> Result<String, Fault> {
        let msg = Message::Act {
            step,
            state: state.clone(),
        };
        let out = match self.request(&msg, self.config.call_timeout()) {
            Reply::Message(Message::Action { value }) => action_token(&value),
            Reply::Message(Message::Error { stage, trace }) if stage == "runtime" => {
                Err(Fault::runtime(trace))
            }
            Reply::Message(Message::Error { stage, trace }) => Err(Fault::protocol(format!(
                "runner error at stage {stage}: {trace}"
            ))),
            Reply::Message(other) => Err(self.unexpected("action", &other)),
            Reply::Fault(f) => Err(f),
        };
        self.record(RequestKind::Act, classify(&out));
        out
    }

    pub fn request_artifact(&mut self, params: &GenerateParams) -> Result<IntGrid, Fault> {
        let msg = Message::Generate { params: *params };
        let out = match self.request(&msg, self.config.call_timeout()) {
            Reply::Message(Message::Artifact { grid }) => artifact_grid(&grid),
            Reply::Message(Message::Error { stage, trace }) if stage == "runtime" => {
                Err(Fault::runtime(trace))
            }
            Reply::Message(Message::Error { stage, trace }) => Err(Fault::protocol(format!(
                "runner error at stage {stage}: {trace}"
            ))),
            Reply::Message(other) => Err(self.unexpected("artifact", &other)),
            Reply::Fault(f) => Err(f),
        };
        self.record(RequestKind::Generate, classify(&out));
        out
    }

    /// Sends `shutdown` and reaps the child, killing it if it has not exited
    /// within one second. Idempotent; returns the exit status the first time.
    pub fn shutdown(&mut self) -> Option<ExitStatus> {
        let mut proc = self.proc.take()?;
        proc.send(&Message::Shutdown);
        proc.to_child = None;
        let deadline = Instant::now() + SHUTDOWN_GRACE;
        loop {
            match proc.child.try_wait() {
                Ok(Some(status)) => return Some(status),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                _ => {
                    let _ = proc.child.kill();
                    return proc.child.wait().ok();
                }
            }
        }
    }
}

fn classify<T>(out: &Result<T, Fault>) -> ExecStatus {
    match out {
        Ok(_) => ExecStatus::Executable,
        Err(f) => f.status,
    }
}

impl Drop for SandboxHandle {
    fn drop(&mut self) {
        if let Some(mut proc) = self.proc.take() {
            proc.kill();
        }
    }
}

impl ProgramRunner for SandboxHandle {
    fn load(&mut self, program_id: &str, source: &str, entry: &str) -> Result<(), Fault> {
        self.load_program(program_id, source, entry)
    }

    fn act(&mut self, step: u64, state: &Value) -> Result<String, Fault> {
        self.request_action(state, step)
    }

    fn generate(&mut self, params: &GenerateParams) -> Result<IntGrid, Fault> {
        self.request_artifact(params)
    }

    fn recover(&mut self) -> bool {
        if self.loaded.is_none() || self.restarts_used >= self.config.max_restart_attempts {
            return false;
        }
        self.restarts_used += 1;
        if let Some(mut proc) = self.proc.take() {
            proc.kill();
        }
        let out = self.send_load();
        self.record(RequestKind::Load, classify(&out));
        out.is_ok()
    }
}
