//! Line-delimited JSON wire protocol spoken between the harness and a
//! program runner over the child's stdin/stdout.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

/// Parameters of a generator invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateParams {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

/// Every message that may appear on the wire, in either direction.
///
/// Field order matters: serialization is byte-exact with the documented
/// schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Ready {
        protocol: u32,
    },
    Load {
        program_id: String,
        source: String,
        entry: String,
    },
    Loaded {
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Act {
        step: u64,
        state: Value,
    },
    Action {
        value: Value,
    },
    Generate {
        params: GenerateParams,
    },
    Artifact {
        grid: Value,
    },
    Error {
        stage: String,
        #[serde(default, alias = "message")]
        trace: String,
    },
    Shutdown,
}

impl Message {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("protocol messages always serialize");
        s.push('\n');
        s
    }

    pub fn parse(line: &str) -> Result<Message, serde_json::Error> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n']))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Ready { .. } => "ready",
            Message::Load { .. } => "load",
            Message::Loaded { .. } => "loaded",
            Message::Act { .. } => "act",
            Message::Action { .. } => "action",
            Message::Generate { .. } => "generate",
            Message::Artifact { .. } => "artifact",
            Message::Error { .. } => "error",
            Message::Shutdown => "shutdown",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn wire_format_is_exact() {
        let cases = [
            (
                Message::Ready { protocol: 1 },
                r#"{"type":"ready","protocol":1}"#,
            ),
            (
                Message::Load {
                    program_id: "ab".into(),
                    source: "x".into(),
                    entry: "policy".into(),
                },
                r#"{"type":"load","program_id":"ab","source":"x","entry":"policy"}"#,
            ),
            (
                Message::Loaded {
                    ok: true,
                    error: None,
                },
                r#"{"type":"loaded","ok":true}"#,
            ),
            (
                Message::Loaded {
                    ok: false,
                    error: Some("bad".into()),
                },
                r#"{"type":"loaded","ok":false,"error":"bad"}"#,
            ),
            (
                Message::Act {
                    step: 3,
                    state: json!({"grid": [["empty"]], "aux": {}}),
                },
                r#"{"type":"act","step":3,"state":{"grid":[["empty"]],"aux":{}}}"#,
            ),
            (
                Message::Action {
                    value: json!("LEFT"),
                },
                r#"{"type":"action","value":"LEFT"}"#,
            ),
            (
                Message::Error {
                    stage: "runtime".into(),
                    trace: "boom".into(),
                },
                r#"{"type":"error","stage":"runtime","trace":"boom"}"#,
            ),
            (
                Message::Generate {
                    params: GenerateParams {
                        width: 10,
                        height: 8,
                        seed: 5,
                    },
                },
                r#"{"type":"generate","params":{"width":10,"height":8,"seed":5}}"#,
            ),
            (
                Message::Artifact {
                    grid: json!([[0, 1], [1, 0]]),
                },
                r#"{"type":"artifact","grid":[[0,1],[1,0]]}"#,
            ),
            (Message::Shutdown, r#"{"type":"shutdown"}"#),
        ];
        for (msg, wire) in cases {
            assert_eq!(msg.to_line(), format!("{wire}\n"));
            assert_eq!(Message::parse(wire).unwrap(), msg);
        }
    }

    #[test]
    fn unknown_type_is_rejected() {
        assert!(Message::parse(r#"{"type":"hello"}"#).is_err());
        assert!(Message::parse("garbage").is_err());
    }
}
