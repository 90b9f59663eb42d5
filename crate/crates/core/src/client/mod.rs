//! Black-box access to models under test.
//!
//! A [`ModelHandle`] pairs a display id and decoding parameters with a
//! [`Backend`]. Three backends exist: a chat-completions endpoint reached
//! over HTTP, deterministic stubs, and the simulated model families from
//! [`crate::sim`]. Retries, logprob bookkeeping and batching live in the
//! handle, so every backend gets the same behavior.

mod remote;
mod spec;
mod stub;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IndexedFailure, Result};
use crate::types::ModelResponse;

pub use remote::{
    api_key_env_var, build_chat_request, parse_chat_response, EndpointConfig, RemoteBackend,
};
pub use spec::{BackendSpec, HandleSpec, StubSpec};
pub use stub::StubBackend;

pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_TOP_LOGPROBS: u32 = 20;
pub const DEFAULT_RETRIES: u32 = 3;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Warning attached to responses whose backend could not supply the
/// requested per-token log-probabilities.
pub const LOGPROBS_UNAVAILABLE: &str = "logprobs_unavailable";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteEndpoint,
    Stub,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Number of per-token candidates to request; `None` disables logprobs.
    #[serde(default)]
    pub top_logprobs: Option<u32>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            top_logprobs: Some(DEFAULT_TOP_LOGPROBS),
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(Error::validation("temperature", "must be >= 0"));
        }
        if self.max_tokens == 0 {
            return Err(Error::validation("max_tokens", "must be >= 1"));
        }
        Ok(())
    }
}

/// A single chat turn: optional system prompt plus one user message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub system: Option<String>,
    pub prompt: String,
}

impl ChatRequest {
    pub fn user(prompt: impl Into<String>) -> Self {
        ChatRequest {
            system: None,
            prompt: prompt.into(),
        }
    }
}

pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// One attempt at a completion. Implementations must return within
    /// roughly `timeout` and report overruns as [`Error::Timeout`].
    fn complete(
        &self,
        request: &ChatRequest,
        decode: &DecodeConfig,
        timeout: Duration,
    ) -> Result<ModelResponse>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: DEFAULT_RETRIES,
            base_delay: Duration::from_millis(100),
        }
    }
}

#[derive(Clone)]
pub struct ModelHandle {
    id: String,
    decode: DecodeConfig,
    retry: RetryPolicy,
    timeout: Duration,
    backend: Arc<dyn Backend>,
}

impl std::fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelHandle")
            .field("id", &self.id)
            .field("backend", &self.backend.kind())
            .field("decode", &self.decode)
            .finish()
    }
}

impl ModelHandle {
    pub fn new(id: impl Into<String>, backend: Arc<dyn Backend>) -> Self {
        ModelHandle {
            id: id.into(),
            decode: DecodeConfig::default(),
            retry: RetryPolicy::default(),
            timeout: DEFAULT_TIMEOUT,
            backend,
        }
    }

    pub fn with_decode(mut self, decode: DecodeConfig) -> Self {
        self.decode = decode;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn decode(&self) -> &DecodeConfig {
        &self.decode
    }

    pub fn complete(&self, prompt: &str) -> Result<ModelResponse> {
        self.chat(&ChatRequest::user(prompt))
    }

    pub fn chat(&self, request: &ChatRequest) -> Result<ModelResponse> {
        self.chat_with(request, self.retry, self.timeout)
    }

    fn chat_with(
        &self,
        request: &ChatRequest,
        retry: RetryPolicy,
        timeout: Duration,
    ) -> Result<ModelResponse> {
        if request.prompt.is_empty() {
            return Err(Error::Input("prompt must be non-empty".into()));
        }
        self.decode.validate()?;
        let mut attempt = 0;
        let response = loop {
            match self.backend.complete(request, &self.decode, timeout) {
                Ok(r) => break r,
                Err(e) if e.is_retryable() && attempt < retry.retries => {
                    log::debug!("{}: attempt {} failed: {e}", self.id, attempt + 1);
                    std::thread::sleep(retry.base_delay * 2u32.saturating_pow(attempt));
                    attempt += 1;
                }
                Err(Error::Transport { message, .. }) => {
                    return Err(Error::Transport {
                        attempts: attempt + 1,
                        message,
                    })
                }
                Err(e) => return Err(e),
            }
        };
        self.finish(response)
    }

    fn finish(&self, mut response: ModelResponse) -> Result<ModelResponse> {
        match self.decode.top_logprobs {
            None => response.token_logprobs = None,
            Some(_) if response.token_logprobs.is_none() => {
                if !response.warnings.iter().any(|w| w == LOGPROBS_UNAVAILABLE) {
                    response.warnings.push(LOGPROBS_UNAVAILABLE.into());
                }
            }
            Some(_) => {}
        }
        response
            .validate()
            .map_err(|e| Error::Protocol(format!("{}: {e}", self.id)))?;
        Ok(response)
    }

    /// Runs every prompt of the plan with at most `max_parallel` requests in
    /// flight. Results are returned in prompt order.
    pub fn batch_complete(&self, plan: &QueryPlan) -> Result<BatchResults> {
        let requests: Vec<ChatRequest> = plan.prompts.iter().map(ChatRequest::user).collect();
        self.batch_chat(&requests, plan)
    }

    pub fn batch_chat(&self, requests: &[ChatRequest], plan: &QueryPlan) -> Result<BatchResults> {
        let batch = self.run_batch(requests, plan)?;
        if batch.results.iter().all(Result::is_err) {
            return Err(Error::AllFailed {
                failures: batch.failures(),
            });
        }
        Ok(batch)
    }

    fn run_batch(&self, requests: &[ChatRequest], plan: &QueryPlan) -> Result<BatchResults> {
        if requests.is_empty() {
            return Err(Error::Input("query plan has no prompts".into()));
        }
        if plan.max_parallel == 0 {
            return Err(Error::validation("max_parallel", "must be positive"));
        }
        let retry = RetryPolicy {
            retries: plan.retries,
            base_delay: self.retry.base_delay,
        };
        let workers = plan.max_parallel.min(requests.len());
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<ModelResponse>>>> =
            Mutex::new((0..requests.len()).map(|_| None).collect());

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let outcome = self.chat_with(&requests[i], retry, plan.timeout);
                    slots.lock().expect("result slots poisoned")[i] = Some(outcome);
                });
            }
        });

        let results: Vec<Result<ModelResponse>> = slots
            .into_inner()
            .expect("result slots poisoned")
            .into_iter()
            .map(|slot| slot.expect("every index is visited"))
            .collect();
        Ok(BatchResults { results })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub prompts: Vec<String>,
    pub max_parallel: usize,
    pub retries: u32,
    pub timeout: Duration,
}

impl QueryPlan {
    pub fn new(prompts: Vec<String>) -> Self {
        QueryPlan {
            prompts,
            max_parallel: 4,
            retries: DEFAULT_RETRIES,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn max_parallel(mut self, n: usize) -> Self {
        self.max_parallel = n;
        self
    }

    pub fn retries(mut self, n: u32) -> Self {
        self.retries = n;
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

/// Per-prompt outcomes of a batch, in prompt order.
#[derive(Debug)]
pub struct BatchResults {
    pub results: Vec<Result<ModelResponse>>,
}

impl BatchResults {
    pub fn failures(&self) -> Vec<IndexedFailure> {
        self.results
            .iter()
            .enumerate()
            .filter_map(|(index, r)| {
                r.as_ref().err().map(|e| IndexedFailure {
                    index,
                    cause: e.to_string(),
                })
            })
            .collect()
    }

    pub fn success_count(&self) -> usize {
        self.results.iter().filter(|r| r.is_ok()).count()
    }

    /// All responses, or the first failure wrapped with `label(index)`.
    pub fn into_all(self, label: impl Fn(usize) -> String) -> Result<Vec<ModelResponse>> {
        self.results
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.map_err(|e| e.context(label(i))))
            .collect()
    }
}

/// Like [`ModelHandle::batch_complete`], but fails on the first error,
/// naming the offending item through `label`.
pub fn complete_all(
    handle: &ModelHandle,
    prompts: Vec<String>,
    max_parallel: usize,
    label: impl Fn(usize) -> String,
) -> Result<Vec<ModelResponse>> {
    let requests: Vec<ChatRequest> = prompts.into_iter().map(ChatRequest::user).collect();
    chat_all(handle, &requests, max_parallel, label)
}

/// [`complete_all`] for full chat requests.
pub fn chat_all(
    handle: &ModelHandle,
    requests: &[ChatRequest],
    max_parallel: usize,
    label: impl Fn(usize) -> String,
) -> Result<Vec<ModelResponse>> {
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    let plan = QueryPlan {
        prompts: Vec::new(),
        max_parallel: max_parallel.max(1),
        retries: handle.retry.retries,
        timeout: handle.timeout,
    };
    handle.run_batch(requests, &plan)?.into_all(label)
}
