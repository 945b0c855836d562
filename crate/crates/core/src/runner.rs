//! The execution backend seen by tasks: load a program, then ask it for
//! actions or artifacts.

use serde_json::Value;

use crate::program::Fault;
use crate::sandbox::protocol::GenerateParams;

/// Rectangular integer grid returned by a generator.
pub type IntGrid = Vec<Vec<i64>>;

pub trait ProgramRunner {
    /// Loads `source` into a fresh namespace, replacing any previous program.
    fn load(&mut self, program_id: &str, source: &str, entry: &str) -> Result<(), Fault>;

    /// One policy invocation. The returned token has been checked to be text
    /// but not yet checked against the task's action set.
    fn act(&mut self, step: u64, state: &Value) -> Result<String, Fault>;

    /// One generator invocation, validated to be a non-empty rectangular
    /// integer grid.
    fn generate(&mut self, params: &GenerateParams) -> Result<IntGrid, Fault>;

    /// Tries to bring the runner back after a Crash or Timeout with the
    /// current program reloaded. Returns false when no restart budget remains.
    fn recover(&mut self) -> bool {
        false
    }
}

impl<R: ProgramRunner + ?Sized> ProgramRunner for Box<R> {
    fn load(&mut self, program_id: &str, source: &str, entry: &str) -> Result<(), Fault> {
        (**self).load(program_id, source, entry)
    }

    fn act(&mut self, step: u64, state: &Value) -> Result<String, Fault> {
        (**self).act(step, state)
    }

    fn generate(&mut self, params: &GenerateParams) -> Result<IntGrid, Fault> {
        (**self).generate(params)
    }

    fn recover(&mut self) -> bool {
        (**self).recover()
    }
}

/// Validates an `action` payload: it must be a string.
pub fn action_token(value: &Value) -> Result<String, Fault> {
    match value {
        Value::String(s) => Ok(s.clone()),
        Value::Null => Err(Fault::invalid_output("policy returned no action")),
        other => Err(Fault::invalid_output(format!(
            "policy returned non-text action {other}"
        ))),
    }
}

/// Validates an `artifact` payload: non-empty, rectangular, integer cells.
pub fn artifact_grid(value: &Value) -> Result<IntGrid, Fault> {
    let rows = value
        .as_array()
        .ok_or_else(|| Fault::invalid_output("artifact is not a list of rows"))?;
    if rows.is_empty() {
        return Err(Fault::invalid_output("artifact has no rows"));
    }
    let mut grid = Vec::with_capacity(rows.len());
    let mut width = None;
    for (r, row) in rows.iter().enumerate() {
        let cells = row
            .as_array()
            .ok_or_else(|| Fault::invalid_output(format!("artifact row {r} is not a list")))?;
        match width {
            None if cells.is_empty() => {
                return Err(Fault::invalid_output("artifact rows are empty"));
            }
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Fault::invalid_output(format!(
                    "artifact is ragged: row {r} has {} cells, expected {w}",
                    cells.len()
                )));
            }
            Some(_) => {}
        }
        let parsed = cells
            .iter()
            .map(|c| {
                c.as_i64().ok_or_else(|| {
                    Fault::invalid_output(format!("artifact row {r} holds non-integer cell {c}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        grid.push(parsed);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::ExecStatus;
    use serde_json::json;

    #[test]
    fn action_must_be_text() {
        assert_eq!(action_token(&json!("LEFT")).unwrap(), "LEFT");
        assert_eq!(
            action_token(&json!(3)).unwrap_err().status,
            ExecStatus::InvalidOutput
        );
        assert_eq!(
            action_token(&Value::Null).unwrap_err().status,
            ExecStatus::InvalidOutput
        );
    }

    #[test]
    fn artifact_validation() {
        assert_eq!(artifact_grid(&json!([[0, 1], [1, 0]])).unwrap().len(), 2);
        for bad in [
            json!([[0, 1], [1]]),
            json!([]),
            json!([[]]),
            json!("maze"),
            json!([[0, "x"]]),
            json!([[0.5]]),
        ] {
            let err = artifact_grid(&bad).unwrap_err();
            assert_eq!(err.status, ExecStatus::InvalidOutput, "{bad}");
        }
    }
}
