//! Client for a token-embedding service.
//!
//! Request, `POST {url}` with `Content-Type: application/json`:
//!
//! ```json
//! {"text": "ঢাকা নদী", "layer": null}
//! ```
//!
//! `layer` is a hidden-layer index, or `null` for the final layer.
//!
//! Success response:
//!
//! ```json
//! {"tokens": ["▁ঢাকা", "▁নদী"], "vectors": [[0.1, 0.2], [0.3, 0.4]]}
//! ```
//!
//! Special tokens (`<s>`, `</s>`, `[CLS]`, ...) must already be stripped.
//! A text longer than the encoder accepts is signalled with HTTP 413, or with
//! any 4xx whose body is `{"error": {"code": "encoder_overflow", ...}}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Embedder, GatewayError, InFlightLimit, RetryPolicy, TokenEmbeddings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowPolicy {
    /// Fail with `EncoderOverflow`.
    Reject,
    /// Split at the whitespace nearest the middle and embed the halves separately.
    Chunk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub url: String,
    /// Hidden layer to read; `None` means the final layer.
    pub layer: Option<usize>,
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub overflow: OverflowPolicy,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            url: "http://localhost:8001/embed".into(),
            layer: None,
            api_key_env: None,
            timeout_secs: 60,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            overflow: OverflowPolicy::Reject,
        }
    }
}

pub struct HttpEmbedder {
    config: EmbedderConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    limit: InFlightLimit,
}

#[derive(Deserialize)]
struct EmbedResponse {
    tokens: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

fn is_overflow_body(body: &str) -> bool {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v.pointer("/error/code").and_then(Value::as_str).map(|c| c == "encoder_overflow"))
        .unwrap_or(false)
}

/// Byte index of the whitespace run closest to the middle of `text`.
fn split_point(text: &str) -> Option<usize> {
    let mid = text.len() / 2;
    text.char_indices()
        .filter(|(i, c)| c.is_whitespace() && *i > 0)
        .map(|(i, _)| i)
        .min_by_key(|i| i.abs_diff(mid))
}

impl HttpEmbedder {
    pub fn new(config: EmbedderConfig) -> Result<Self, GatewayError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::InvalidRequest(format!("environment variable {var} holding the API key is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let limit = InFlightLimit::new(config.max_in_flight);
        Ok(Self { config, api_key, agent, limit })
    }

    fn request(&self, text: &str) -> Result<TokenEmbeddings, GatewayError> {
        let url = &self.config.url;
        let body = json!({ "text": text, "layer": self.config.layer });
        self.config.retry.run(|| {
            let _permit = self.limit.acquire();
            let mut req = self.agent.post(url).header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            let mut resp = req
                .send_json(&body)
                .map_err(|e| GatewayError::BackendUnavailable(format!("{url}: {e}")))?;
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| GatewayError::BackendUnavailable(format!("{url}: reading body: {e}")))?;
            match status {
                200..=299 => {
                    let parsed: EmbedResponse = serde_json::from_str(&text)
                        .map_err(|e| GatewayError::MalformedResponse(format!("{url}: {e}")))?;
                    TokenEmbeddings::new(parsed.tokens, parsed.vectors)
                }
                413 => Err(GatewayError::EncoderOverflow(text)),
                400..=499 if is_overflow_body(&text) => Err(GatewayError::EncoderOverflow(text)),
                429 | 500..=599 => Err(GatewayError::BackendUnavailable(format!("{url}: HTTP {status}: {text}"))),
                _ => Err(GatewayError::InvalidRequest(format!("{url}: HTTP {status}: {text}"))),
            }
        })
    }

    fn embed_chunked(&self, text: &str) -> Result<TokenEmbeddings, GatewayError> {
        match self.request(text) {
            Err(GatewayError::EncoderOverflow(msg)) => {
                let at = split_point(text).ok_or(GatewayError::EncoderOverflow(msg))?;
                let (head, tail) = text.split_at(at);
                let mut first = self.embed_chunked(head.trim_end())?;
                first.extend(self.embed_chunked(tail.trim_start())?)?;
                Ok(first)
            }
            other => other,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("cannot embed empty text".into()));
        }
        match self.config.overflow {
            OverflowPolicy::Reject => self.request(text),
            OverflowPolicy::Chunk => self.embed_chunked(text),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_point_prefers_the_middle_space() {
        let t = "ক খ গ ঘ";
        let at = split_point(t).unwrap();
        let (a, b) = t.split_at(at);
        assert_eq!(a.trim(), "ক খ");
        assert_eq!(b.trim(), "গ ঘ");
        assert_eq!(split_point("একশব্দ"), None);
    }

    #[test]
    fn overflow_body_detection() {
        assert!(is_overflow_body(r#"{"error": {"code": "encoder_overflow", "message": "too long"}}"#));
        assert!(!is_overflow_body(r#"{"error": {"code": "bad_request"}}"#));
        assert!(!is_overflow_body("not json"));
    }
}
