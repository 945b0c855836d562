use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{approx_tokens, ChatExchange, Provider, ProviderConfig, ProviderError, RateLimiter};
use crate::prompt::PromptBundle;

#[derive(Debug, Deserialize)]
struct Completion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

/// Client for any endpoint speaking the OpenAI chat-completions format.
pub struct OpenAiProvider {
    config: ProviderConfig,
    api_key: String,
    client: Client,
    limiter: RateLimiter,
}

impl OpenAiProvider {
    /// Resolves the API key from the environment variable named in the
    /// config. A missing key is an authentication error.
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            ProviderError::Auth(format!(
                "environment variable {} is not set for provider `{}`",
                config.api_key_env, config.name
            ))
        })?;
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: ProviderConfig, api_key: String) -> Result<Self, ProviderError> {
        config.validate()?;
        let client = Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_s))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        let limiter = RateLimiter::per_minute(config.requests_per_minute);
        Ok(Self {
            config,
            api_key,
            client,
            limiter,
        })
    }

    fn url(&self) -> String {
        let base = self.config.endpoint_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    fn body(&self, prompt: &PromptBundle) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model_id,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
            "max_tokens": self.config.max_tokens,
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(
            self.config
                .backoff_base_ms
                .saturating_mul(1 << attempt.min(16)),
        )
    }
}

impl Provider for OpenAiProvider {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn chat(&self, prompt: &PromptBundle) -> Result<ChatExchange, ProviderError> {
        let body = self.body(prompt);
        let started = Instant::now();
        let mut attempts = 0;
        let mut last_error = String::new();
        while attempts <= self.config.max_retries {
            if attempts > 0 {
                std::thread::sleep(self.backoff(attempts - 1));
            }
            attempts += 1;
            self.limiter.acquire();
            let mut req = self.client.post(self.url()).json(&body).header(
                self.config.auth_header.as_str(),
                format!("{}{}", self.config.auth_prefix, self.api_key),
            );
            for (k, v) in &self.config.extra_headers {
                req = req.header(k.as_str(), v.as_str());
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    log::warn!(
                        "{}: request failed (attempt {attempts}): {e}",
                        self.config.name
                    );
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
                return Err(ProviderError::Auth(format!(
                    "{} rejected the credential from {} ({status})",
                    self.config.name, self.config.api_key_env
                )));
            }
            if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                log::warn!("{}: HTTP {status} (attempt {attempts})", self.config.name);
                last_error = format!("HTTP {status}");
                continue;
            }
            if !status.is_success() {
                let text = resp.text().unwrap_or_default();
                return Err(ProviderError::Unavailable(format!("HTTP {status}: {text}")));
            }
            let completion: Completion = resp
                .json()
                .map_err(|e| ProviderError::Unavailable(format!("malformed completion: {e}")))?;
            let response_text = completion
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .unwrap_or_default();
            let prompt_text = prompt.full_text();
            let usage = completion.usage;
            let tokens_in = usage
                .as_ref()
                .and_then(|u| u.prompt_tokens)
                .unwrap_or_else(|| approx_tokens(&prompt_text));
            let tokens_out = usage
                .as_ref()
                .and_then(|u| u.completion_tokens)
                .unwrap_or_else(|| approx_tokens(&response_text));
            return Ok(ChatExchange {
                prompt_sha: prompt.sha(),
                prompt_text,
                response_text,
                tokens_in,
                tokens_out,
                cost_usd: self.config.pricing().cost(tokens_in, tokens_out),
                latency_ms: started.elapsed().as_secs_f64() * 1e3,
                attempts,
            });
        }
        Err(ProviderError::Unavailable(format!(
            "{} failed after {attempts} attempts: {last_error}",
            self.config.name
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::PromptKind;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves the given (status, body) pairs to successive connections and
    /// records each request's headers and body.
    fn mock_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                head.push_str(&String::from_utf8_lossy(&buf));
                log.lock().unwrap().push(head);
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1"), seen)
    }

    fn config(url: String) -> ProviderConfig {
        ProviderConfig {
            name: "mock".into(),
            endpoint_url: url,
            model_id: "m-1".into(),
            api_key_env: "LLMSEARCH_TEST_KEY_UNSET".into(),
            backoff_base_ms: 1,
            price_per_million_in: 1.0,
            price_per_million_out: 2.0,
            ..ProviderConfig::default()
        }
    }

    const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"```\ndef policy\n```"}}],"usage":{"prompt_tokens":12,"completion_tokens":5}}"#;

    #[test]
    fn retries_429_then_succeeds() {
        let (url, seen) = mock_server(vec![
            (429, "{}".into()),
            (429, "{}".into()),
            (200, OK_BODY.into()),
        ]);
        let p = OpenAiProvider::with_key(config(url), "sk-test".into()).unwrap();
        let ex = p
            .chat(&PromptBundle::new(PromptKind::Initial, "sys", "user"))
            .unwrap();
        assert_eq!(ex.attempts, 3);
        assert_eq!(ex.response_text, "```\ndef policy\n```");
        assert_eq!((ex.tokens_in, ex.tokens_out), (12, 5));
        assert_eq!(ex.cost_usd, 12.0 / 1e6 + 10.0 / 1e6);
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 3);
        assert!(seen[0].contains("POST /v1/chat/completions"));
        assert!(seen[0]
            .to_ascii_lowercase()
            .contains("authorization: bearer sk-test"));
        assert!(seen[0].contains(r#""model":"m-1""#));
    }

    #[test]
    fn gives_up_after_retries() {
        let (url, _) = mock_server(vec![(503, "{}".into()), (503, "{}".into())]);
        let mut cfg = config(url);
        cfg.max_retries = 1;
        let p = OpenAiProvider::with_key(cfg, "k".into()).unwrap();
        let err = p
            .chat(&PromptBundle::new(PromptKind::Initial, "s", "u"))
            .unwrap_err();
        assert!(matches!(err, ProviderError::Unavailable(_)), "{err:?}");
    }

    #[test]
    fn unauthorized_fails_immediately() {
        let (url, seen) = mock_server(vec![(401, "{}".into())]);
        let p = OpenAiProvider::with_key(config(url), "k".into()).unwrap();
        let err = p
            .chat(&PromptBundle::new(PromptKind::Initial, "s", "u"))
            .unwrap_err();
        assert!(matches!(err, ProviderError::Auth(_)));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn missing_credential_names_env_var() {
        let err = OpenAiProvider::new(config("http://127.0.0.1:9".into()))
            .err()
            .unwrap();
        match err {
            ProviderError::Auth(msg) => assert!(msg.contains("LLMSEARCH_TEST_KEY_UNSET")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_falls_back_to_whitespace_count() {
        let body = r#"{"choices":[{"message":{"content":"a b c"}}]}"#;
        let (url, _) = mock_server(vec![(200, body.into())]);
        let p = OpenAiProvider::with_key(config(url), "k".into()).unwrap();
        let ex = p
            .chat(&PromptBundle::new(PromptKind::Initial, "s t", "u"))
            .unwrap();
        assert_eq!((ex.tokens_in, ex.tokens_out), (3, 3));
    }
}
