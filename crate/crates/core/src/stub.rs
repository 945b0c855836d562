//! A harness-side stand-in for the real program runner.
//!
//! Candidate "programs" for the stub are written in a tiny line language,
//! enough to script every behaviour the harness must classify: working
//! policies and generators, syntax errors, runtime errors, bad outputs,
//! hangs and crashes. The same interpreter backs the `stub-runner` binary
//! (speaking the wire protocol over stdio) and the in-process
//! [`StubRunner`] used by fast tests.
//!
//! ```text
//! # comment
//! def policy                  entry point name (required)
//! load sleep | load crash | load print <text>
//! act const <TOKEN>
//! act cycle <T1> <T2> ...     token chosen by step index
//! act track <target> <agent>  LEFT/RIGHT/NOOP toward the target's column
//! act steer                   greedy controller for the vehicle task
//! act fail-after <n> <TOKEN>  TOKEN for steps < n, then raises
//! act raise <message>
//! act number <n> | act none | act loop | act crash
//! gen open | gen blocked | gen serpentine | gen walls <p>
//! gen sequence <kind> ...     kinds: open, blocked, serpentine, walls:<p>
//! gen ragged | gen raise <message> | gen loop | gen crash
//! ```

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::program::Fault;
use crate::runner::{action_token, artifact_grid, IntGrid, ProgramRunner};
use crate::sandbox::protocol::{GenerateParams, Message, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq)]
enum LoadEffect {
    Sleep,
    Crash,
    Print(String),
}

#[derive(Debug, Clone, PartialEq)]
enum ActBehaviour {
    Const(String),
    Cycle(Vec<String>),
    Track { target: String, agent: String },
    Steer,
    FailAfter(u64, String),
    Raise(String),
    Number(f64),
    Nothing,
    Loop,
    Crash,
}

#[derive(Debug, Clone, PartialEq)]
enum MazeKind {
    Open,
    Blocked,
    Serpentine,
    Walls(f64),
}

#[derive(Debug, Clone, PartialEq)]
enum GenBehaviour {
    Sequence(Vec<MazeKind>),
    Ragged,
    Raise(String),
    Loop,
    Crash,
}

/// A parsed stub program.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StubProgram {
    entries: Vec<String>,
    load_effects: Vec<LoadEffect>,
    act: Option<ActBehaviour>,
    generate: Option<GenBehaviour>,
    generate_calls: usize,
}

/// What the interpreter wants the runner to do in response to a request.
#[derive(Debug, Clone, PartialEq)]
pub enum StubReply {
    Value(Value),
    RuntimeError(String),
    Hang,
    Crash,
}

fn syntax_error(line_no: usize, msg: &str) -> String {
    format!("  File \"<candidate>\", line {line_no}\nSyntaxError: {msg}")
}

fn check_brackets(source: &str) -> Result<(), String> {
    let mut stack: Vec<(char, usize)> = Vec::new();
    for (i, line) in source.lines().enumerate() {
        for ch in line.chars() {
            match ch {
                '(' | '[' | '{' => stack.push((ch, i + 1)),
                ')' | ']' | '}' => {
                    let open = match ch {
                        ')' => '(',
                        ']' => '[',
                        _ => '{',
                    };
                    match stack.pop() {
                        Some((o, _)) if o == open => {}
                        _ => return Err(syntax_error(i + 1, &format!("unmatched '{ch}'"))),
                    }
                }
                _ => {}
            }
        }
    }
    match stack.pop() {
        Some((open, line)) => Err(syntax_error(line, &format!("'{open}' was never closed"))),
        None => Ok(()),
    }
}

fn parse_maze_kind(word: &str) -> Option<MazeKind> {
    match word {
        "open" => Some(MazeKind::Open),
        "blocked" => Some(MazeKind::Blocked),
        "serpentine" => Some(MazeKind::Serpentine),
        _ => {
            let p: f64 = word.strip_prefix("walls:")?.parse().ok()?;
            (0.0..=1.0).contains(&p).then_some(MazeKind::Walls(p))
        }
    }
}

impl StubProgram {
    /// Parses and "imports" a program. Errors carry a Python-style
    /// diagnostic.
    pub fn parse(source: &str) -> Result<StubProgram, String> {
        check_brackets(source)?;
        let mut prog = StubProgram::default();
        for (i, raw) in source.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            let invalid = || syntax_error(line_no, "invalid syntax");
            match words.as_slice() {
                ["def", name] => prog.entries.push(name.to_string()),
                ["load", "sleep"] => prog.load_effects.push(LoadEffect::Sleep),
                ["load", "crash"] => prog.load_effects.push(LoadEffect::Crash),
                ["load", "print", ..] => {
                    let text = line.splitn(3, char::is_whitespace).nth(2).unwrap_or("");
                    prog.load_effects
                        .push(LoadEffect::Print(text.trim().to_string()));
                }
                ["act", rest @ ..] => {
                    let behaviour = match rest {
                        ["const", tok] => ActBehaviour::Const(tok.to_string()),
                        ["cycle", toks @ ..] if !toks.is_empty() => {
                            ActBehaviour::Cycle(toks.iter().map(|t| t.to_string()).collect())
                        }
                        ["track", target, agent] => ActBehaviour::Track {
                            target: target.to_string(),
                            agent: agent.to_string(),
                        },
                        ["steer"] => ActBehaviour::Steer,
                        ["fail-after", n, tok] => ActBehaviour::FailAfter(
                            n.parse().map_err(|_| invalid())?,
                            tok.to_string(),
                        ),
                        ["raise", ..] => {
                            let msg = line.splitn(3, char::is_whitespace).nth(2).unwrap_or("");
                            ActBehaviour::Raise(msg.trim().to_string())
                        }
                        ["number", n] => ActBehaviour::Number(n.parse().map_err(|_| invalid())?),
                        ["none"] => ActBehaviour::Nothing,
                        ["loop"] => ActBehaviour::Loop,
                        ["crash"] => ActBehaviour::Crash,
                        _ => return Err(invalid()),
                    };
                    prog.act = Some(behaviour);
                }
                ["gen", rest @ ..] => {
                    let behaviour = match rest {
                        ["walls", p] => {
                            let kind =
                                parse_maze_kind(&format!("walls:{p}")).ok_or_else(invalid)?;
                            GenBehaviour::Sequence(vec![kind])
                        }
                        ["sequence", kinds @ ..] if !kinds.is_empty() => GenBehaviour::Sequence(
                            kinds
                                .iter()
                                .map(|k| parse_maze_kind(k).ok_or_else(invalid))
                                .collect::<Result<_, _>>()?,
                        ),
                        ["ragged"] => GenBehaviour::Ragged,
                        ["raise", ..] => {
                            let msg = line.splitn(3, char::is_whitespace).nth(2).unwrap_or("");
                            GenBehaviour::Raise(msg.trim().to_string())
                        }
                        ["loop"] => GenBehaviour::Loop,
                        ["crash"] => GenBehaviour::Crash,
                        [kind] => {
                            GenBehaviour::Sequence(vec![parse_maze_kind(kind).ok_or_else(invalid)?])
                        }
                        _ => return Err(invalid()),
                    };
                    prog.generate = Some(behaviour);
                }
                _ => return Err(invalid()),
            }
        }
        Ok(prog)
    }

    pub fn has_entry(&self, entry: &str) -> bool {
        self.entries.iter().any(|e| e == entry)
    }

    pub fn act(&mut self, step: u64, state: &Value) -> StubReply {
        let Some(behaviour) = &self.act else {
            return StubReply::RuntimeError(traceback(
                "NotImplementedError: program defines no policy",
            ));
        };
        match behaviour {
            ActBehaviour::Const(tok) => StubReply::Value(json!(tok)),
            ActBehaviour::Cycle(toks) => StubReply::Value(json!(toks[step as usize % toks.len()])),
            ActBehaviour::Track { target, agent } => track(state, target, agent),
            ActBehaviour::Steer => steer(state),
            ActBehaviour::FailAfter(n, tok) => {
                if step < *n {
                    StubReply::Value(json!(tok))
                } else {
                    StubReply::RuntimeError(traceback("IndexError: list index out of range"))
                }
            }
            ActBehaviour::Raise(msg) => StubReply::RuntimeError(traceback(msg)),
            ActBehaviour::Number(n) => StubReply::Value(json!(n)),
            ActBehaviour::Nothing => StubReply::Value(Value::Null),
            ActBehaviour::Loop => StubReply::Hang,
            ActBehaviour::Crash => StubReply::Crash,
        }
    }

    pub fn generate(&mut self, params: &GenerateParams) -> StubReply {
        let Some(behaviour) = &self.generate else {
            return StubReply::RuntimeError(traceback(
                "NotImplementedError: program defines no generator",
            ));
        };
        let call = self.generate_calls;
        self.generate_calls += 1;
        match behaviour {
            GenBehaviour::Sequence(kinds) => {
                let grid = build_maze(&kinds[call % kinds.len()], params);
                StubReply::Value(json!(grid))
            }
            GenBehaviour::Ragged => {
                let mut grid = build_maze(&MazeKind::Open, params);
                if let Some(last) = grid.last_mut() {
                    last.pop();
                }
                StubReply::Value(json!(grid))
            }
            GenBehaviour::Raise(msg) => StubReply::RuntimeError(traceback(msg)),
            GenBehaviour::Loop => StubReply::Hang,
            GenBehaviour::Crash => StubReply::Crash,
        }
    }
}

fn traceback(msg: &str) -> String {
    format!(
        "Traceback (most recent call last):\n  File \"<candidate>\", line 1, in <module>\n{msg}"
    )
}

fn grid_column(state: &Value, token: &str) -> Option<usize> {
    let rows = state.get("grid")?.as_array()?;
    rows.iter().find_map(|row| {
        row.as_array()?
            .iter()
            .position(|cell| cell.as_str() == Some(token))
    })
}

fn track(state: &Value, target: &str, agent: &str) -> StubReply {
    let (Some(t), Some(a)) = (grid_column(state, target), grid_column(state, agent)) else {
        return StubReply::Value(json!("NOOP"));
    };
    let tok = match a.cmp(&t) {
        std::cmp::Ordering::Greater => "LEFT",
        std::cmp::Ordering::Less => "RIGHT",
        std::cmp::Ordering::Equal => "NOOP",
    };
    StubReply::Value(json!(tok))
}

fn pair(v: Option<&Value>) -> Option<(f64, f64)> {
    let a = v?.as_array()?;
    Some((a.first()?.as_f64()?, a.get(1)?.as_f64()?))
}

fn steer(state: &Value) -> StubReply {
    let ship = state.get("ship");
    let parsed = (|| {
        let pos = pair(ship?.get("pos"))?;
        let vel = pair(ship?.get("vel"))?;
        let heading = ship?.get("heading")?.as_f64()?;
        let target = pair(state.get("target"))?;
        let omega = state.get("omega")?.as_f64()?;
        Some((pos, vel, heading, target, omega))
    })();
    let Some((pos, vel, heading, target, omega)) = parsed else {
        return StubReply::RuntimeError(traceback("KeyError: 'ship'"));
    };
    let to = (target.0 - pos.0, target.1 - pos.1);
    let dist = to.0.hypot(to.1);
    let cruise = (dist * 0.08).min(4.0);
    let desired = if dist > 1e-9 {
        (to.0 / dist * cruise, to.1 / dist * cruise)
    } else {
        (0.0, 0.0)
    };
    let err = (desired.0 - vel.0, desired.1 - vel.1);
    if err.0.hypot(err.1) < 0.25 {
        return StubReply::Value(json!("NO_OP"));
    }
    let want = err.1.atan2(err.0).to_degrees();
    let diff = (want - heading + 540.0).rem_euclid(360.0) - 180.0;
    let tok = if diff.abs() <= omega / 2.0 {
        "THRUST"
    } else if diff > 0.0 {
        "ROTATE_RIGHT"
    } else {
        "ROTATE_LEFT"
    };
    StubReply::Value(json!(tok))
}

fn build_maze(kind: &MazeKind, params: &GenerateParams) -> Vec<Vec<u8>> {
    let (w, h) = (params.width, params.height);
    let mut grid = vec![vec![0u8; w]; h];
    match kind {
        MazeKind::Open => {}
        MazeKind::Blocked => {
            let mid = h / 2;
            grid[mid].iter_mut().for_each(|c| *c = 1);
        }
        MazeKind::Serpentine => {
            for r in (1..h.saturating_sub(1)).step_by(2) {
                let gap = if (r / 2) % 2 == 0 { w - 1 } else { 0 };
                for (c, cell) in grid[r].iter_mut().enumerate() {
                    *cell = u8::from(c != gap);
                }
            }
        }
        MazeKind::Walls(p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            for row in grid.iter_mut() {
                for cell in row.iter_mut() {
                    *cell = u8::from(rng.random_bool(*p));
                }
            }
        }
    }
    grid
}

/// Parses a program and checks its entry point, as a `load` request would.
pub fn load_stub(source: &str, entry: &str) -> Result<StubProgram, String> {
    let prog = StubProgram::parse(source)?;
    if !prog.has_entry(entry) {
        return Err(format!("NameError: entry '{entry}' not found"));
    }
    Ok(prog)
}

/// Serves the wire protocol on the given streams until `shutdown` or EOF.
///
/// `sleep` and `loop` statements block forever; `crash` exits the process.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W) -> io::Result<()> {
    fn emit<W: Write>(out: &mut W, msg: &Message) -> io::Result<()> {
        out.write_all(msg.to_line().as_bytes())?;
        out.flush()
    }
    fn hang() -> ! {
        loop {
            std::thread::sleep(std::time::Duration::from_secs(3600));
        }
    }

    emit(
        &mut output,
        &Message::Ready {
            protocol: PROTOCOL_VERSION,
        },
    )?;
    let mut program: Option<StubProgram> = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match Message::parse(&line) {
            Err(e) => Message::Error {
                stage: "protocol".into(),
                trace: format!("malformed message: {e}"),
            },
            Ok(Message::Shutdown) => break,
            Ok(Message::Load { source, entry, .. }) => {
                program = None;
                match load_stub(&source, &entry) {
                    Ok(prog) => {
                        for effect in &prog.load_effects {
                            match effect {
                                LoadEffect::Sleep => hang(),
                                LoadEffect::Crash => std::process::exit(3),
                                LoadEffect::Print(text) => eprintln!("{text}"),
                            }
                        }
                        program = Some(prog);
                        Message::Loaded {
                            ok: true,
                            error: None,
                        }
                    }
                    Err(error) => Message::Loaded {
                        ok: false,
                        error: Some(error),
                    },
                }
            }
            Ok(req @ (Message::Act { .. } | Message::Generate { .. })) => {
                let Some(prog) = program.as_mut() else {
                    emit(
                        &mut output,
                        &Message::Error {
                            stage: "protocol".into(),
                            trace: "no program loaded".into(),
                        },
                    )?;
                    continue;
                };
                let (reply, is_act) = match &req {
                    Message::Act { step, state } => (prog.act(*step, state), true),
                    Message::Generate { params } => (prog.generate(params), false),
                    _ => unreachable!(),
                };
                match reply {
                    StubReply::Value(value) if is_act => Message::Action { value },
                    StubReply::Value(grid) => Message::Artifact { grid },
                    StubReply::RuntimeError(trace) => Message::Error {
                        stage: "runtime".into(),
                        trace,
                    },
                    StubReply::Hang => hang(),
                    StubReply::Crash => std::process::exit(4),
                }
            }
            Ok(other) => Message::Error {
                stage: "protocol".into(),
                trace: format!("unexpected message type {}", other.kind()),
            },
        };
        emit(&mut output, &reply)?;
    }
    Ok(())
}

/// In-process runner over the stub language. Hangs become immediate
/// `Timeout` faults and crashes become `Crash` faults, so tests never block.
#[derive(Debug, Default)]
pub struct StubRunner {
    program: Option<StubProgram>,
}

impl StubRunner {
    pub fn new() -> Self {
        Self::default()
    }
}

fn reply_fault(reply: StubReply) -> Result<Value, Fault> {
    match reply {
        StubReply::Value(v) => Ok(v),
        StubReply::RuntimeError(t) => Err(Fault::runtime(t)),
        StubReply::Hang => Err(Fault::timeout("simulated hang")),
        StubReply::Crash => Err(Fault::crash("simulated crash")),
    }
}

impl ProgramRunner for StubRunner {
    fn load(&mut self, _program_id: &str, source: &str, entry: &str) -> Result<(), Fault> {
        self.program = None;
        let prog = load_stub(source, entry).map_err(Fault::syntax)?;
        for effect in &prog.load_effects {
            match effect {
                LoadEffect::Sleep => return Err(Fault::timeout("simulated hang during load")),
                LoadEffect::Crash => return Err(Fault::crash("simulated crash during load")),
                LoadEffect::Print(_) => {}
            }
        }
        self.program = Some(prog);
        Ok(())
    }

    fn act(&mut self, step: u64, state: &Value) -> Result<String, Fault> {
        let prog = self
            .program
            .as_mut()
            .ok_or_else(|| Fault::protocol("no program loaded"))?;
        action_token(&reply_fault(prog.act(step, state))?)
    }

    fn generate(&mut self, params: &GenerateParams) -> Result<IntGrid, Fault> {
        let prog = self
            .program
            .as_mut()
            .ok_or_else(|| Fault::protocol("no program loaded"))?;
        artifact_grid(&reply_fault(prog.generate(params))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::ExecStatus;

    fn params() -> GenerateParams {
        GenerateParams {
            width: 10,
            height: 10,
            seed: 7,
        }
    }

    #[test]
    fn unbalanced_paren_is_a_syntax_error() {
        let err = StubProgram::parse("def policy\nact const (LEFT\n").unwrap_err();
        assert!(err.contains("SyntaxError"), "{err}");
        assert!(err.contains("was never closed"), "{err}");
    }

    #[test]
    fn unknown_statement_is_a_syntax_error() {
        let err = StubProgram::parse("def policy(state):\n    return 'LEFT'\n").unwrap_err();
        assert!(err.contains("SyntaxError: invalid syntax"), "{err}");
    }

    #[test]
    fn missing_entry() {
        assert_eq!(
            load_stub("def other\nact const LEFT", "policy").unwrap_err(),
            "NameError: entry 'policy' not found"
        );
    }

    #[test]
    fn in_process_runner_classifies() {
        let mut r = StubRunner::new();
        r.load("id", "def policy\nact const LEFT", "policy")
            .unwrap();
        assert_eq!(r.act(0, &json!({})).unwrap(), "LEFT");

        r.load("id", "def policy\nact number 3", "policy").unwrap();
        assert_eq!(
            r.act(0, &json!({})).unwrap_err().status,
            ExecStatus::InvalidOutput
        );

        r.load(
            "id",
            "def policy\nact raise ZeroDivisionError: division by zero",
            "policy",
        )
        .unwrap();
        let f = r.act(0, &json!({})).unwrap_err();
        assert_eq!(f.status, ExecStatus::RuntimeError);
        assert!(f.detail.ends_with("ZeroDivisionError: division by zero"));

        r.load("id", "def policy\nact loop", "policy").unwrap();
        assert_eq!(
            r.act(0, &json!({})).unwrap_err().status,
            ExecStatus::Timeout
        );

        assert_eq!(
            r.load("id", "def policy\nload sleep", "policy")
                .unwrap_err()
                .status,
            ExecStatus::Timeout
        );
    }

    #[test]
    fn track_moves_toward_target() {
        let mut grid = vec![vec!["empty"; 10]; 10];
        grid[3][7] = "ball";
        grid[9][4] = "paddle";
        let state = json!({"grid": grid, "aux": {}});
        assert_eq!(
            track(&state, "ball", "paddle"),
            StubReply::Value(json!("RIGHT"))
        );
    }

    #[test]
    fn generators() {
        let mut p = StubProgram::parse("def g\ngen sequence open blocked").unwrap();
        let StubReply::Value(a) = p.generate(&params()) else {
            panic!()
        };
        let StubReply::Value(b) = p.generate(&params()) else {
            panic!()
        };
        assert_eq!(artifact_grid(&a).unwrap().iter().flatten().sum::<i64>(), 0);
        assert_eq!(artifact_grid(&b).unwrap()[5].iter().sum::<i64>(), 10);

        let mut p = StubProgram::parse("def g\ngen ragged").unwrap();
        let StubReply::Value(v) = p.generate(&params()) else {
            panic!()
        };
        assert!(artifact_grid(&v).is_err());
    }

    #[test]
    fn serve_transcript() {
        let input = [
            r#"{"type":"load","program_id":"x","source":"def policy\nact const LEFT","entry":"policy"}"#,
            r#"{"type":"act","step":0,"state":{"grid":[],"aux":{}}}"#,
            r#"{"type":"bogus"}"#,
            r#"{"type":"shutdown"}"#,
        ]
        .join("\n");
        let mut out = Vec::new();
        serve(input.as_bytes(), &mut out).unwrap();
        let out = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], r#"{"type":"ready","protocol":1}"#);
        assert_eq!(lines[1], r#"{"type":"loaded","ok":true}"#);
        assert_eq!(lines[2], r#"{"type":"action","value":"LEFT"}"#);
        assert!(lines[3].starts_with(r#"{"type":"error","stage":"protocol""#));
        assert_eq!(lines.len(), 4);
    }
}
