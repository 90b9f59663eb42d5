use std::collections::BTreeMap;
use std::time::Duration;

use super::{Backend, BackendKind, ChatRequest, DecodeConfig};
use crate::error::{Error, Result};
use crate::types::ModelResponse;

#[derive(Debug, Clone, PartialEq)]
enum Reply {
    Echo,
    Constant(String),
    Table {
        entries: BTreeMap<String, String>,
        fallback: Option<String>,
    },
}

/// Deterministic text-only backend. Never exposes logprobs.
#[derive(Debug, Clone, PartialEq)]
pub struct StubBackend {
    reply: Reply,
    latency: BTreeMap<String, Duration>,
}

impl StubBackend {
    pub fn echo() -> Self {
        StubBackend {
            reply: Reply::Echo,
            latency: BTreeMap::new(),
        }
    }

    pub fn constant(text: impl Into<String>) -> Self {
        StubBackend {
            reply: Reply::Constant(text.into()),
            latency: BTreeMap::new(),
        }
    }

    /// Looks the prompt up in `entries`; unknown prompts get `fallback`, or
    /// are echoed when there is none.
    pub fn table(entries: BTreeMap<String, String>, fallback: Option<String>) -> Self {
        StubBackend {
            reply: Reply::Table { entries, fallback },
            latency: BTreeMap::new(),
        }
    }

    /// Simulated per-prompt latency. A prompt whose latency exceeds the
    /// request timeout fails with [`Error::Timeout`].
    pub fn with_latency(mut self, latency: BTreeMap<String, Duration>) -> Self {
        self.latency = latency;
        self
    }
}

impl Backend for StubBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Stub
    }

    fn complete(
        &self,
        request: &ChatRequest,
        _decode: &DecodeConfig,
        timeout: Duration,
    ) -> Result<ModelResponse> {
        if let Some(&delay) = self.latency.get(&request.prompt) {
            if delay > timeout {
                std::thread::sleep(timeout);
                return Err(Error::Timeout(timeout));
            }
            std::thread::sleep(delay);
        }
        let text = match &self.reply {
            Reply::Echo => request.prompt.clone(),
            Reply::Constant(t) => t.clone(),
            Reply::Table { entries, fallback } => entries
                .get(&request.prompt)
                .or(fallback.as_ref())
                .cloned()
                .unwrap_or_else(|| request.prompt.clone()),
        };
        Ok(ModelResponse::text_only(text))
    }
}
