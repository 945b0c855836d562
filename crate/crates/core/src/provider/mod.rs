//! Language-model providers: a live OpenAI-compatible client plus
//! deterministic scripted and replay providers.
//!
//! Every provider returns a [`ChatExchange`] with token and cost
//! accounting. Providers are shared by all trials of an experiment, so
//! `chat` takes `&self`.

mod cassette;
mod extract;
mod openai;
mod ratelimit;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptBundle;

pub use cassette::{cassette_jsonl, read_cassette, write_cassette, CassetteEntry, ReplayProvider};
pub use extract::extract_code;
pub use openai::OpenAiProvider;
pub use ratelimit::RateLimiter;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("replay cassette exhausted after {0} responses")]
    ReplayExhausted(usize),
    #[error("empty response")]
    EmptyResponse,
    #[error("invalid provider config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub prompt_sha: String,
    pub prompt_text: String,
    pub response_text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub cost_usd: f64,
    pub latency_ms: f64,
    pub attempts: u32,
}

/// Per-million-token prices in USD.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub per_million_in: f64,
    pub per_million_out: f64,
}

impl Pricing {
    pub fn cost(&self, tokens_in: u64, tokens_out: u64) -> f64 {
        tokens_in as f64 * self.per_million_in / 1e6
            + tokens_out as f64 * self.per_million_out / 1e6
    }
}

/// Whitespace token estimate used when a provider reports no usage.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    fn chat(&self, prompt: &PromptBundle) -> Result<ChatExchange, ProviderError>;

    /// True when responses depend only on the call sequence, so run logs
    /// can be reproduced byte for byte.
    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Connection and accounting settings of a live provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub name: String,
    pub endpoint_url: String,
    pub model_id: String,
    pub api_key_env: String,
    pub max_retries: u32,
    pub requests_per_minute: u32,
    pub price_per_million_in: f64,
    pub price_per_million_out: f64,
    /// Header carrying the credential and the prefix before the key.
    pub auth_header: String,
    pub auth_prefix: String,
    pub extra_headers: Vec<(String, String)>,
    pub max_tokens: u32,
    pub temperature: Option<f64>,
    pub backoff_base_ms: u64,
    pub request_timeout_s: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            endpoint_url: "https://api.openai.com/v1".into(),
            model_id: String::new(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_retries: 3,
            requests_per_minute: 60,
            price_per_million_in: 0.0,
            price_per_million_out: 0.0,
            auth_header: "Authorization".into(),
            auth_prefix: "Bearer ".into(),
            extra_headers: Vec::new(),
            max_tokens: 4096,
            temperature: None,
            backoff_base_ms: 1000,
            request_timeout_s: 300,
        }
    }
}

impl ProviderConfig {
    pub fn pricing(&self) -> Pricing {
        Pricing {
            per_million_in: self.price_per_million_in,
            per_million_out: self.price_per_million_out,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.price_per_million_in < 0.0 || self.price_per_million_out < 0.0 {
            return Err(ProviderError::Config("prices must be non-negative".into()));
        }
        if self.model_id.is_empty() {
            return Err(ProviderError::Config(format!(
                "provider `{}` has no model_id",
                self.name
            )));
        }
        if self.requests_per_minute == 0 {
            return Err(ProviderError::Config(
                "requests_per_minute must be positive".into(),
            ));
        }
        Ok(())
    }
}

type Script = dyn FnMut(&PromptBundle, usize) -> Option<String> + Send;

/// Provider driven by a closure: `script(prompt, call_index)` returns the
/// response text, or `None` when the script has run out.
pub struct ScriptedProvider {
    name: String,
    pricing: Pricing,
    state: Mutex<(usize, Box<Script>)>,
}

impl ScriptedProvider {
    pub fn new(
        name: impl Into<String>,
        script: impl FnMut(&PromptBundle, usize) -> Option<String> + Send + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            pricing: Pricing::default(),
            state: Mutex::new((0, Box::new(script))),
        }
    }

    /// Responds with the queued texts in order.
    pub fn from_queue<S: Into<String>>(
        name: impl Into<String>,
        texts: impl IntoIterator<Item = S>,
    ) -> Self {
        let texts: Vec<String> = texts.into_iter().map(Into::into).collect();
        Self::new(name, move |_, i| texts.get(i).cloned())
    }

    pub fn with_pricing(mut self, pricing: Pricing) -> Self {
        self.pricing = pricing;
        self
    }

    pub fn calls(&self) -> usize {
        self.state.lock().unwrap().0
    }
}

impl Provider for ScriptedProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn chat(&self, prompt: &PromptBundle) -> Result<ChatExchange, ProviderError> {
        let mut guard = self.state.lock().unwrap();
        let (count, script) = &mut *guard;
        let response = script(prompt, *count).ok_or(ProviderError::ReplayExhausted(*count))?;
        *count += 1;
        let prompt_text = prompt.full_text();
        let tokens_in = approx_tokens(&prompt_text);
        let tokens_out = approx_tokens(&response);
        Ok(ChatExchange {
            prompt_sha: prompt.sha(),
            prompt_text,
            response_text: response,
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
