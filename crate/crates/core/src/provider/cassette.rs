use std::fs;
use std::io;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{approx_tokens, ChatExchange, Pricing, Provider, ProviderError};
use crate::prompt::PromptBundle;

/// One recorded exchange. An empty `prompt_sha` marks an unkeyed entry that
/// is served in sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    #[serde(default)]
    pub prompt_sha: String,
    pub response: String,
    #[serde(default)]
    pub tokens_in: Option<u64>,
    #[serde(default)]
    pub tokens_out: Option<u64>,
}

impl CassetteEntry {
    pub fn unkeyed(response: impl Into<String>) -> Self {
        Self {
            prompt_sha: String::new(),
            response: response.into(),
            tokens_in: None,
            tokens_out: None,
        }
    }
}

impl From<&ChatExchange> for CassetteEntry {
    fn from(ex: &ChatExchange) -> Self {
        Self {
            prompt_sha: ex.prompt_sha.clone(),
            response: ex.response_text.clone(),
            tokens_in: Some(ex.tokens_in),
            tokens_out: Some(ex.tokens_out),
        }
    }
}

pub fn read_cassette(path: &Path) -> io::Result<Vec<CassetteEntry>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), i + 1),
                )
            })
        })
        .collect()
}

pub fn cassette_jsonl(entries: &[CassetteEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("cassette entries serialize"));
        out.push('\n');
    }
    out
}

pub fn write_cassette(path: &Path, entries: &[CassetteEntry]) -> io::Result<()> {
    crate::runlog::write_atomic(path, cassette_jsonl(entries).as_bytes())
}

/// Replays recorded responses.
///
/// A call is served by the first unused entry whose `prompt_sha` matches
/// the prompt; failing that by the first unused unkeyed entry; failing
/// that by the first unused entry of any kind.
pub struct ReplayProvider {
    name: String,
    pricing: Pricing,
    entries: Vec<CassetteEntry>,
    used: Mutex<Vec<bool>>,
}

impl ReplayProvider {
    pub fn new(
        name: impl Into<String>,
        entries: Vec<CassetteEntry>,
    ) -> Result<Self, ProviderError> {
        if entries.is_empty() {
            return Err(ProviderError::Config("replay cassette is empty".into()));
        }
        let used = Mutex::new(vec![false; entries.len()]);
        Ok(Self {
            name: name.into(),
            pricing: Pricing::default(),
            entries,
            used,
        })
    }

    pub fn from_file(name: impl Into<String>, path: &Path) -> Result<Self, ProviderError> {
        let entries = read_cassette(path).map_err(|e| {
            ProviderError::Config(format!("cannot read cassette {}: {e}", path.display()))
        })?;
        Self::new(name, entries)
    }

    pub fn with_pricing(mut self, pricing: Pricing) -> Self {
        self.pricing = pricing;
        self
    }

    pub fn remaining(&self) -> usize {
        self.used.lock().unwrap().iter().filter(|u| !**u).count()
    }
}

impl Provider for ReplayProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn chat(&self, prompt: &PromptBundle) -> Result<ChatExchange, ProviderError> {
        let sha = prompt.sha();
        let mut used = self.used.lock().unwrap();
        let free = |pred: &dyn Fn(&CassetteEntry) -> bool| {
            self.entries
                .iter()
                .enumerate()
                .position(|(i, e)| !used[i] && pred(e))
        };
        let idx = free(&|e| e.prompt_sha == sha)
            .or_else(|| free(&|e| e.prompt_sha.is_empty()))
            .or_else(|| free(&|_| true))
            .ok_or(ProviderError::ReplayExhausted(self.entries.len()))?;
        used[idx] = true;
        let entry = &self.entries[idx];
        let prompt_text = prompt.full_text();
        let tokens_in = entry
            .tokens_in
            .unwrap_or_else(|| approx_tokens(&prompt_text));
        let tokens_out = entry
            .tokens_out
            .unwrap_or_else(|| approx_tokens(&entry.response));
        Ok(ChatExchange {
            prompt_sha: sha,
            prompt_text,
            response_text: entry.response.clone(),
            tokens_in,
            tokens_out,
            cost_usd: self.pricing.cost(tokens_in, tokens_out),
            latency_ms: 0.0,
            attempts: 1,
        })
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::PromptKind;

    fn prompt(text: &str) -> PromptBundle {
        PromptBundle::new(PromptKind::Initial, "sys", text)
    }

    #[test]
    fn sequential_then_exhausted() {
        let p = ReplayProvider::new(
            "r",
            vec![
                CassetteEntry::unkeyed("a"),
                CassetteEntry::unkeyed("b"),
                CassetteEntry::unkeyed("c"),
            ],
        )
        .unwrap();
        let got: Vec<String> = (0..3)
            .map(|_| p.chat(&prompt("x")).unwrap().response_text)
            .collect();
        assert_eq!(got, ["a", "b", "c"]);
        assert_eq!(p.chat(&prompt("x")), Err(ProviderError::ReplayExhausted(3)));
    }

    #[test]
    fn keyed_entry_wins_regardless_of_order() {
        let target = prompt("special");
        let mut keyed = CassetteEntry::unkeyed("for special");
        keyed.prompt_sha = target.sha();
        let p = ReplayProvider::new("r", vec![CassetteEntry::unkeyed("first"), keyed]).unwrap();
        assert_eq!(p.chat(&target).unwrap().response_text, "for special");
        assert_eq!(p.chat(&prompt("other")).unwrap().response_text, "first");
    }

    #[test]
    fn empty_log_rejected() {
        assert!(ReplayProvider::new("r", vec![]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let entries = vec![CassetteEntry {
            prompt_sha: "ab".into(),
            response: "x\ny".into(),
            tokens_in: Some(4),
            tokens_out: Some(2),
        }];
        write_cassette(&path, &entries).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "{\"prompt_sha\":\"ab\",\"response\":\"x\\ny\",\"tokens_in\":4,\"tokens_out\":2}\n"
        );
        assert_eq!(read_cassette(&path).unwrap(), entries);
    }
}
