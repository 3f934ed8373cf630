//! Completion interface, retrying generation, scripted replies and pricing.

mod pricing;
mod scripted;

use alloc::string::String;
use core::fmt;
use core::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::TokenUsage;

pub use pricing::{cost, ModelPrice, PriceError, PriceTable};
pub use scripted::{scripted_generate, whitespace_units, ScriptedBackend, ScriptedCorpus, RECORD_SEPARATOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout_s: f64,
    pub max_retries: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            model_name: String::from("scripted"),
            temperature: 1.0,
            max_output_tokens: 8192,
            request_timeout_s: 300.0,
            max_retries: 3,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.model_name.trim().is_empty() {
            return Err("model_name must be non-empty");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err("temperature must be within [0, 2]");
        }
        if self.max_output_tokens == 0 {
            return Err("max_output_tokens must be >= 1");
        }
        if !(self.request_timeout_s > 0.0) {
            return Err("request_timeout_s must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    /// Summed over every attempt, including failed ones that reported usage.
    pub usage: TokenUsage,
    pub latency_ms: f64,
    pub attempts: u32,
}

/// Per-request metadata a backend may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestMeta {
    pub trial_index: u32,
    pub seed: u64,
}

/// Outcome of a single backend attempt that did not yield text.
#[derive(Debug, Clone, PartialEq)]
pub enum AttemptError {
    /// Network failure, rate limit or server error. Worth retrying.
    Transport {
        message: String,
        usage: Option<TokenUsage>,
    },
    /// The provider answered but the answer carries no text.
    Empty { usage: TokenUsage, message: String },
    /// Not retryable (authentication, bad request, misconfiguration).
    Fatal { message: String },
    /// A scripted corpus has no entry for this trial.
    ScriptExhausted { trial_index: u32, len: usize },
}

impl fmt::Display for AttemptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttemptError::Transport { message, .. } => write!(f, "transport failure: {message}"),
            AttemptError::Empty { message, .. } => write!(f, "empty completion: {message}"),
            AttemptError::Fatal { message } => write!(f, "backend error: {message}"),
            AttemptError::ScriptExhausted { trial_index, len } => write!(
                f,
                "scripted corpus has {len} entries and does not cycle; no reply for trial {trial_index}"
            ),
        }
    }
}

/// A source of completions. Implementations must tolerate concurrent calls.
pub trait LlmBackend {
    fn complete(
        &self,
        prompt: &str,
        params: &GenerationParams,
        meta: RequestMeta,
    ) -> Result<Completion, AttemptError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn complete(
        &self,
        prompt: &str,
        params: &GenerationParams,
        meta: RequestMeta,
    ) -> Result<Completion, AttemptError> {
        (**self).complete(prompt, params, meta)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for alloc::sync::Arc<B> {
    fn complete(
        &self,
        prompt: &str,
        params: &GenerationParams,
        meta: RequestMeta,
    ) -> Result<Completion, AttemptError> {
        (**self).complete(prompt, params, meta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GenerateError {
    EmptyPrompt,
    /// Retries exhausted or a non-retryable failure. Aborts the run.
    BackendUnavailable {
        attempts: u32,
        usage: TokenUsage,
        message: String,
    },
    /// Counts as a trial.
    EmptyCompletion {
        attempts: u32,
        usage: TokenUsage,
        message: String,
    },
    ScriptExhausted { trial_index: u32 },
}

impl GenerateError {
    pub fn usage(&self) -> TokenUsage {
        match self {
            GenerateError::BackendUnavailable { usage, .. }
            | GenerateError::EmptyCompletion { usage, .. } => *usage,
            _ => TokenUsage::default(),
        }
    }
}

impl fmt::Display for GenerateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenerateError::EmptyPrompt => f.write_str("prompt is empty"),
            GenerateError::BackendUnavailable {
                attempts, message, ..
            } => write!(f, "backend unavailable after {attempts} attempt(s): {message}"),
            GenerateError::EmptyCompletion { message, .. } => {
                write!(f, "empty completion: {message}")
            }
            GenerateError::ScriptExhausted { trial_index } => {
                write!(f, "scripted corpus exhausted at trial {trial_index}")
            }
        }
    }
}

impl core::error::Error for GenerateError {}

/// Exponential backoff between retries: `base * 2^attempt`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backoff {
    pub base_ms: u64,
    pub max_ms: u64,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            base_ms: 500,
            max_ms: 30_000,
        }
    }
}

impl Backoff {
    pub const NONE: Backoff = Backoff {
        base_ms: 0,
        max_ms: 0,
    };

    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.min(32)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_ms.saturating_mul(factor).min(self.max_ms))
    }
}

/// Calls `backend` with retries on transport failures.
///
/// Usage reported by failed attempts is folded into the result (or error).
/// `sleep` is invoked between attempts.
pub fn generate<B: LlmBackend + ?Sized>(
    backend: &B,
    prompt: &str,
    params: &GenerationParams,
    meta: RequestMeta,
    backoff: Backoff,
    sleep: &mut dyn FnMut(Duration),
) -> Result<Completion, GenerateError> {
    if prompt.trim().is_empty() {
        return Err(GenerateError::EmptyPrompt);
    }
    let mut usage = TokenUsage::default();
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        match backend.complete(prompt, params, meta) {
            Ok(mut completion) => {
                usage += completion.usage;
                completion.usage = usage;
                completion.attempts = attempts;
                if completion.text.trim().is_empty() {
                    return Err(GenerateError::EmptyCompletion {
                        attempts,
                        usage,
                        message: String::from("reply body is empty"),
                    });
                }
                return Ok(completion);
            }
            Err(AttemptError::Empty {
                usage: u,
                message,
            }) => {
                usage += u;
                return Err(GenerateError::EmptyCompletion {
                    attempts,
                    usage,
                    message,
                });
            }
            Err(AttemptError::Fatal { message }) => {
                return Err(GenerateError::BackendUnavailable {
                    attempts,
                    usage,
                    message,
                })
            }
            Err(AttemptError::ScriptExhausted { trial_index, .. }) => {
                return Err(GenerateError::ScriptExhausted { trial_index })
            }
            Err(AttemptError::Transport { message, usage: u }) => {
                usage += u.unwrap_or_default();
                if attempts > params.max_retries {
                    return Err(GenerateError::BackendUnavailable {
                        attempts,
                        usage,
                        message,
                    });
                }
                sleep(backoff.delay(attempts - 1));
            }
        }
    }
}
