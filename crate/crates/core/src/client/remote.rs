use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendKind, ChatRequest, DecodeConfig};
use crate::error::{Error, Result};
use crate::types::{ModelResponse, TokenCandidate};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base address, e.g. `https://api.example.com/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key. Defaults to
    /// `MODEL_API_KEY_<HANDLE>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

/// `MODEL_API_KEY_<HANDLE>`, with the handle id upper-cased and every
/// non-alphanumeric character replaced by `_`.
pub fn api_key_env_var(handle_id: &str) -> String {
    let suffix: String = handle_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("MODEL_API_KEY_{suffix}")
}

pub struct RemoteBackend {
    config: EndpointConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(handle_id: &str, config: EndpointConfig) -> Result<Self> {
        let var = config
            .api_key_env
            .clone()
            .unwrap_or_else(|| api_key_env_var(handle_id));
        let api_key = std::env::var(&var).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::debug!("{handle_id}: {var} not set, sending unauthenticated requests");
        }
        let http = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| Error::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(RemoteBackend {
            config,
            api_key,
            http,
        })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

/// Request body for one chat completion.
pub fn build_chat_request(model: &str, request: &ChatRequest, decode: &DecodeConfig) -> Value {
    let mut messages = Vec::new();
    if let Some(system) = &request.system {
        messages.push(json!({"role": "system", "content": system}));
    }
    messages.push(json!({"role": "user", "content": request.prompt}));
    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": decode.temperature,
        "max_tokens": decode.max_tokens,
        "logprobs": decode.top_logprobs.is_some(),
    });
    if let Some(k) = decode.top_logprobs {
        body["top_logprobs"] = json!(k);
    }
    body
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    content: Option<Vec<WireToken>>,
}

#[derive(Deserialize)]
struct WireToken {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<WireCandidate>,
}

#[derive(Deserialize)]
struct WireCandidate {
    token: String,
    logprob: f64,
}

/// Decodes a chat-completions response body.
///
/// Per-token candidates come from `top_logprobs`; a token without them
/// contributes its sampled token alone.
pub fn parse_chat_response(body: &[u8]) -> Result<ModelResponse> {
    let wire: WireResponse = serde_json::from_slice(body)
        .map_err(|e| Error::Protocol(format!("malformed completion response: {e}")))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| Error::Protocol("response has no choices".into()))?;
    let text = choice
        .message
        .content
        .ok_or_else(|| Error::Protocol("response message has no content".into()))?;
    let token_logprobs = choice.logprobs.and_then(|lp| lp.content).map(|tokens| {
        tokens
            .into_iter()
            .map(|t| {
                if t.top_logprobs.is_empty() {
                    vec![TokenCandidate {
                        token: t.token,
                        logprob: t.logprob,
                    }]
                } else {
                    t.top_logprobs
                        .into_iter()
                        .map(|c| TokenCandidate {
                            token: c.token,
                            logprob: c.logprob,
                        })
                        .collect()
                }
            })
            .collect::<Vec<_>>()
    });
    let response = ModelResponse {
        text,
        token_logprobs: token_logprobs.filter(|t| !t.is_empty()),
        truncated: choice.finish_reason.as_deref() == Some("length"),
        warnings: Vec::new(),
    };
    response
        .validate()
        .map_err(|e| Error::Protocol(e.to_string()))?;
    Ok(response)
}

impl Backend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::RemoteEndpoint
    }

    fn complete(
        &self,
        request: &ChatRequest,
        decode: &DecodeConfig,
        timeout: Duration,
    ) -> Result<ModelResponse> {
        let body = build_chat_request(&self.config.model, request, decode);
        let mut req = self.http.post(self.url()).timeout(timeout).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| transport(e, timeout))?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(|e| transport(e, timeout))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Error::Transport {
                attempts: 1,
                message: format!("HTTP {status}"),
            });
        }
        if !status.is_success() {
            return Err(Error::Protocol(format!(
                "HTTP {status}: {}",
                String::from_utf8_lossy(&bytes).chars().take(200).collect::<String>()
            )));
        }
        parse_chat_response(&bytes)
    }
}

fn transport(e: reqwest::Error, timeout: Duration) -> Error {
    if e.is_timeout() {
        Error::Timeout(timeout)
    } else {
        Error::Transport {
            attempts: 1,
            message: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_var_name() {
        assert_eq!(api_key_env_var("gpt-4o.mini"), "MODEL_API_KEY_GPT_4O_MINI");
    }

    #[test]
    fn request_fields() {
        let req = ChatRequest {
            system: Some("sys".into()),
            prompt: "hi".into(),
        };
        let body = build_chat_request("m", &req, &DecodeConfig::default());
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "hi");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 512);
        assert_eq!(body["logprobs"], true);
        assert_eq!(body["top_logprobs"], 20);

        let no_lp = DecodeConfig {
            top_logprobs: None,
            ..DecodeConfig::default()
        };
        let body = build_chat_request("m", &ChatRequest::user("x"), &no_lp);
        assert_eq!(body["logprobs"], false);
        assert!(body.get("top_logprobs").is_none());
    }

    #[test]
    fn parses_logprobs() {
        let body = br#"{"choices":[{"message":{"role":"assistant","content":"Hi"},
            "finish_reason":"length",
            "logprobs":{"content":[{"token":"Hi","logprob":-0.1,
              "top_logprobs":[{"token":"Hi","logprob":-0.1},{"token":"Hey","logprob":-2.4}]}]}}]}"#;
        let r = parse_chat_response(body).unwrap();
        assert_eq!(r.text, "Hi");
        assert!(r.truncated);
        let lp = r.token_logprobs.unwrap();
        assert_eq!(lp.len(), 1);
        assert_eq!(lp[0][1].token, "Hey");
    }

    #[test]
    fn missing_content_is_protocol_error() {
        let body = br#"{"choices":[{"message":{"role":"assistant"}}]}"#;
        assert!(matches!(parse_chat_response(body), Err(Error::Protocol(_))));
        assert!(matches!(
            parse_chat_response(br#"{"choices":[]}"#),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn positive_logprob_rejected() {
        let body = br#"{"choices":[{"message":{"content":"x"},
            "logprobs":{"content":[{"token":"x","logprob":0.3}]}}]}"#;
        assert!(parse_chat_response(body).is_err());
    }
}
