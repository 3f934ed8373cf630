//! Blocking client for OpenAI-style `/chat/completions` endpoints.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use evoengineer_core::llm::{AttemptError, Completion, GenerationParams, LlmBackend, RequestMeta};
use evoengineer_core::TokenUsage;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    /// Name of the environment variable holding the API key. The key itself
    /// is never read from files or flags.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrent_requests: usize,
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, thiserror::Error)]
pub enum RemoteError {
    #[error("environment variable {0} (named by api_key_env) is not set")]
    MissingKey(String),
    #[error("max_concurrent_requests must be >= 1")]
    NoConcurrency,
}

/// Counting semaphore capping in-flight requests across task loops.
struct Limiter {
    free: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            free: Mutex::new(n),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

pub struct RemoteBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    limiter: Limiter,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl RemoteBackend {
    pub fn new(cfg: &RemoteConfig) -> Result<Self, RemoteError> {
        if cfg.max_concurrent_requests == 0 {
            return Err(RemoteError::NoConcurrency);
        }
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| RemoteError::MissingKey(var.clone()))?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Ok(RemoteBackend {
            agent,
            endpoint: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            api_key,
            limiter: Limiter::new(cfg.max_concurrent_requests),
        })
    }
}

fn transport(message: String) -> AttemptError {
    AttemptError::Transport { message, usage: None }
}

impl LlmBackend for RemoteBackend {
    fn complete(&self, prompt: &str, params: &GenerationParams, meta: RequestMeta) -> Result<Completion, AttemptError> {
        let body = json!({
            "model": params.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
            "seed": meta.seed,
        })
        .to_string();

        let _permit = self.limiter.acquire();
        let started = Instant::now();
        let mut request = self
            .agent
            .post(&self.endpoint)
            .config()
            .timeout_global(Some(Duration::from_secs_f64(params.request_timeout_s)))
            .build()
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request.send(body).map_err(|e| transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| transport(format!("reading response body: {e}")))?;
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;

        if status == 429 || status >= 500 {
            return Err(transport(format!("HTTP {status}: {}", snippet(&text))));
        }
        if status != 200 {
            return Err(AttemptError::Fatal {
                message: format!("HTTP {status}: {}", snippet(&text)),
            });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| transport(format!("unreadable response body: {e}")))?;
        let usage = parsed
            .usage
            .map(|u| TokenUsage::new(u.prompt_tokens, u.completion_tokens))
            .unwrap_or_default();
        let content = parsed.choices.into_iter().next().and_then(|c| c.message.content);
        match content {
            Some(text) if !text.trim().is_empty() => Ok(Completion {
                text,
                usage,
                latency_ms,
                attempts: 1,
            }),
            _ => Err(AttemptError::Empty {
                usage,
                message: String::from("response carried no message content"),
            }),
        }
    }
}

fn snippet(text: &str) -> &str {
    match text.char_indices().nth(200) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}
