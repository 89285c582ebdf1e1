//! Adapter for OpenAI-compatible inference servers (vLLM, llama.cpp server,
//! TGI in OpenAI mode, ...).
//!
//! * `generate` posts to `{base_url}/chat/completions` with `logprobs: true`
//!   and reads `choices[0].logprobs.content[*].{token, logprob}`.
//! * `score_sequence` posts the chat-formatted prompt with the forced text
//!   appended to `{base_url}/completions` with `echo: true` and reads the
//!   echoed `tokens`/`token_logprobs`/`text_offset`, keeping only the tokens
//!   that cover the forced text. Servers without echoed prompt
//!   log-probabilities yield `UnsupportedCapability`; nothing is approximated.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{
    GatewayError, GenParams, InFlightLimit, LanguageModel, RenderedPrompt, RetryPolicy, ScoredSequence,
    DEFAULT_MAX_SEQUENCE_LENGTH, DEFAULT_MODEL,
};

/// Qwen3 chat layout with thinking disabled. Forced sequences are scored
/// after exactly the text the chat endpoint conditions generation on.
pub const QWEN3_PROMPT_FORMAT: &str = "<|im_start|>system\n{system}<|im_end|>\n<|im_start|>user\n{user}<|im_end|>\n<|im_start|>assistant\n<think>\n\n</think>\n\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveModelConfig {
    /// Base URL including the API prefix, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    /// Raw-prompt layout used for forced scoring, with `{system}` and `{user}`.
    pub prompt_format: String,
    /// Set to false for servers that only offer chat completions.
    pub supports_echo: bool,
    /// Merged verbatim into every chat request body.
    pub extra_body: Map<String, Value>,
    /// Context budget applied to forced scoring.
    pub max_sequence_length: usize,
}

impl Default for LiveModelConfig {
    fn default() -> Self {
        let mut extra_body = Map::new();
        extra_body.insert("chat_template_kwargs".into(), json!({ "enable_thinking": false }));
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: DEFAULT_MODEL.into(),
            api_key_env: None,
            timeout_secs: 300,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            prompt_format: QWEN3_PROMPT_FORMAT.into(),
            supports_echo: true,
            extra_body,
            max_sequence_length: DEFAULT_MAX_SEQUENCE_LENGTH,
        }
    }
}

pub struct OpenAiCompatible {
    config: LiveModelConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    limit: InFlightLimit,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<usize>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    logprobs: Option<ChatLogprobs>,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatLogprobs {
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    logprobs: Option<EchoLogprobs>,
}

#[derive(Deserialize)]
struct EchoLogprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    text_offset: Vec<usize>,
}

/// Substitutes `{system}` and `{user}` in one pass, so placeholder-like text
/// inside the messages is left alone.
pub fn apply_prompt_format(format: &str, prompt: &RenderedPrompt) -> String {
    let mut out = String::with_capacity(format.len() + prompt.system.len() + prompt.user.len());
    let mut rest = format;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        if let Some(after) = tail.strip_prefix("{system}") {
            out.push_str(&prompt.system);
            rest = after;
        } else if let Some(after) = tail.strip_prefix("{user}") {
            out.push_str(&prompt.user);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

fn overflow_message(body: &str) -> bool {
    let lower = body.to_lowercase();
    (lower.contains("context") && (lower.contains("length") || lower.contains("window")))
        || lower.contains("maximum context")
        || lower.contains("too many tokens")
}

impl OpenAiCompatible {
    pub fn new(config: LiveModelConfig) -> Result<Self, GatewayError> {
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

    pub fn config(&self) -> &LiveModelConfig {
        &self.config
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    /// One POST with retries on transport failures. Returns the parsed body.
    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = self.endpoint(path);
        self.config.retry.run(|| {
            let _permit = self.limit.acquire();
            let mut req = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            let mut resp = req
                .send_json(body)
                .map_err(|e| GatewayError::BackendUnavailable(format!("{url}: {e}")))?;
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| GatewayError::BackendUnavailable(format!("{url}: reading body: {e}")))?;
            match status {
                200..=299 => serde_json::from_str(&text)
                    .map_err(|e| GatewayError::MalformedResponse(format!("{url}: {e}"))),
                404 | 405 | 501 => Err(GatewayError::UnsupportedCapability(format!("{url}: HTTP {status}"))),
                429 | 500..=599 => Err(GatewayError::BackendUnavailable(format!("{url}: HTTP {status}: {text}"))),
                400 | 413 if overflow_message(&text) => {
                    Err(GatewayError::ContextOverflow { prompt_tokens: None, limit: self.config.max_sequence_length })
                }
                _ => Err(GatewayError::InvalidRequest(format!("{url}: HTTP {status}: {text}"))),
            }
        })
    }

    fn check_usage(usage: Option<&Usage>, limit: usize) -> Result<(), GatewayError> {
        if let Some(n) = usage.and_then(|u| u.prompt_tokens) {
            if n > limit {
                return Err(GatewayError::ContextOverflow { prompt_tokens: Some(n), limit });
            }
        }
        Ok(())
    }
}

impl LanguageModel for OpenAiCompatible {
    fn generate(&self, prompt: &RenderedPrompt, params: &GenParams) -> Result<ScoredSequence, GatewayError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": params.temperature,
            "max_tokens": params.max_new_tokens,
            "repetition_penalty": params.repetition_penalty,
            "logprobs": true,
        });
        let obj = body.as_object_mut().expect("object literal");
        for (k, v) in &self.config.extra_body {
            obj.insert(k.clone(), v.clone());
        }
        let raw = self.post("chat/completions", &body)?;
        let resp: ChatResponse =
            serde_json::from_value(raw).map_err(|e| GatewayError::MalformedResponse(format!("chat response: {e}")))?;
        Self::check_usage(resp.usage.as_ref(), params.max_sequence_length)?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::MalformedResponse("no choices".into()))?;
        let entries = choice
            .logprobs
            .and_then(|l| l.content)
            .ok_or_else(|| GatewayError::MalformedResponse("response carries no token log-probabilities".into()))?;
        let text = choice.message.content.unwrap_or_default();
        let (tokens, logprobs): (Vec<_>, Vec<_>) = entries
            .into_iter()
            // servers occasionally report +1e-7 for certain tokens
            .map(|t| (t.token, t.logprob.min(0.0)))
            .unzip();
        ScoredSequence::new(text, tokens, logprobs)
    }

    fn score_sequence(&self, prompt: &RenderedPrompt, forced: &str) -> Result<ScoredSequence, GatewayError> {
        if forced.is_empty() {
            return Err(GatewayError::InvalidRequest("forced sequence is empty".into()));
        }
        if !self.config.supports_echo {
            return Err(GatewayError::UnsupportedCapability(
                "endpoint is configured without echoed prompt log-probabilities".into(),
            ));
        }
        let prefix = apply_prompt_format(&self.config.prompt_format, prompt);
        let start = prefix.chars().count();
        let end = start + forced.chars().count();
        let body = json!({
            "model": self.config.model,
            "prompt": format!("{prefix}{forced}"),
            "max_tokens": 1,
            "temperature": 0.0,
            "echo": true,
            "logprobs": 0,
        });
        let raw = self.post("completions", &body)?;
        let resp: CompletionResponse = serde_json::from_value(raw)
            .map_err(|e| GatewayError::MalformedResponse(format!("completion response: {e}")))?;
        Self::check_usage(resp.usage.as_ref(), self.config.max_sequence_length)?;
        let lp = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.logprobs)
            .ok_or_else(|| GatewayError::UnsupportedCapability("completion response has no echoed log-probabilities".into()))?;
        if lp.tokens.len() != lp.token_logprobs.len() || lp.tokens.len() != lp.text_offset.len() {
            return Err(GatewayError::MalformedResponse("echoed log-probability arrays differ in length".into()));
        }
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        for ((token, logprob), offset) in lp.tokens.into_iter().zip(lp.token_logprobs).zip(lp.text_offset) {
            let token_end = offset + token.chars().count();
            if offset >= end || token_end <= start {
                continue;
            }
            if offset < start {
                log::warn!("token {token:?} straddles the prompt/forced boundary");
            }
            let logprob = logprob.ok_or_else(|| {
                GatewayError::MalformedResponse(format!("no log-probability for forced token {token:?}"))
            })?;
            tokens.push(token);
            logprobs.push(logprob.min(0.0));
        }
        if tokens.is_empty() {
            return Err(GatewayError::MalformedResponse("no echoed tokens cover the forced text".into()));
        }
        ScoredSequence::new(forced.to_owned(), tokens, logprobs)
    }
}
