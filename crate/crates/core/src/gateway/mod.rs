//! Every language-model interaction goes through this module.
//!
//! The pipeline needs three capabilities:
//!
//! * free generation with the log-probability of each sampled token,
//! * scoring an arbitrary forced continuation under teacher forcing,
//! * contextual token embeddings for the similarity metrics.
//!
//! [`LanguageModel`] covers the first two and [`Embedder`] the third. The
//! crate ships one live HTTP adapter per trait ([`OpenAiCompatible`],
//! [`HttpEmbedder`]) and one deterministic [`ScriptedBackend`] that
//! implements both from a JSON fixture.

mod embed_http;
mod limit;
mod openai;
mod scripted;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed_http::{EmbedderConfig, HttpEmbedder, OverflowPolicy};
pub use limit::InFlightLimit;
pub use openai::{apply_prompt_format, LiveModelConfig, OpenAiCompatible, QWEN3_PROMPT_FORMAT};
pub use scripted::{ScriptFixture, ScriptedBackend, ScriptedEmbedding, ScriptedGeneration, ScriptedScore};

/// Default context budget, in backend tokens.
pub const DEFAULT_MAX_SEQUENCE_LENGTH: usize = 2048;
/// Default model name for live endpoints.
pub const DEFAULT_MODEL: &str = "Qwen3-14B-bnb-4bit";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Qa,
    Qg,
    Ner,
    Weighter,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::Qa, Component::Qg, Component::Ner, Component::Weighter];

    pub fn tag(self) -> &'static str {
        match self {
            Component::Qa => "qa",
            Component::Qg => "qg",
            Component::Ner => "ner",
            Component::Weighter => "weighter",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A chat prompt after placeholder substitution.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RenderedPrompt {
    pub component: Component,
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoding {
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub repetition_penalty: f64,
    pub decoding: Decoding,
    pub max_sequence_length: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_new_tokens: 256,
            repetition_penalty: 1.1,
            decoding: Decoding::Greedy,
            max_sequence_length: DEFAULT_MAX_SEQUENCE_LENGTH,
        }
    }
}

impl GenParams {
    /// Greedy defaults for one component: 256/150/512/10 new tokens for
    /// QA/QG/NER/weighter, repetition penalty 1.1 except 1.0 for the weighter.
    pub fn for_component(component: Component) -> Self {
        let (max_new_tokens, repetition_penalty) = match component {
            Component::Qa => (256, 1.1),
            Component::Qg => (150, 1.1),
            Component::Ner => (512, 1.1),
            Component::Weighter => (10, 1.0),
        };
        Self { max_new_tokens, repetition_penalty, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.temperature < 0.0 {
            return Err(format!("temperature {} is negative", self.temperature));
        }
        if self.temperature != 0.0 && self.decoding == Decoding::Greedy {
            // Only greedy decoding exists, so a non-zero temperature would be ignored.
            return Err(format!("temperature {} with greedy decoding", self.temperature));
        }
        if self.max_new_tokens == 0 || self.max_sequence_length == 0 {
            return Err("token limits must be positive".into());
        }
        if self.repetition_penalty < 1.0 {
            return Err(format!("repetition_penalty {} is below 1", self.repetition_penalty));
        }
        Ok(())
    }
}

/// Per-component generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComponentParams {
    pub qa: GenParams,
    pub qg: GenParams,
    pub ner: GenParams,
    pub weighter: GenParams,
}

impl Default for ComponentParams {
    fn default() -> Self {
        Self {
            qa: GenParams::for_component(Component::Qa),
            qg: GenParams::for_component(Component::Qg),
            ner: GenParams::for_component(Component::Ner),
            weighter: GenParams::for_component(Component::Weighter),
        }
    }
}

impl ComponentParams {
    pub fn get(&self, component: Component) -> &GenParams {
        match component {
            Component::Qa => &self.qa,
            Component::Qg => &self.qg,
            Component::Ner => &self.ner,
            Component::Weighter => &self.weighter,
        }
    }
}

/// Text with the log-probability of each of its tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub text: String,
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

impl ScoredSequence {
    pub fn new(text: String, tokens: Vec<String>, logprobs: Vec<f64>) -> Result<Self, GatewayError> {
        if tokens.is_empty() || tokens.len() != logprobs.len() {
            return Err(GatewayError::MalformedResponse(format!(
                "{} tokens with {} log-probabilities",
                tokens.len(),
                logprobs.len()
            )));
        }
        if let Some(lp) = logprobs.iter().find(|lp| !(lp.is_finite() && **lp <= 0.0)) {
            return Err(GatewayError::MalformedResponse(format!("log-probability {lp} is not in (-inf, 0]")));
        }
        Ok(Self { text, tokens, logprobs })
    }
}

/// One contextual vector per token, special tokens excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEmbeddings {
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl TokenEmbeddings {
    pub fn new(tokens: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self, GatewayError> {
        if tokens.is_empty() || tokens.len() != vectors.len() {
            return Err(GatewayError::MalformedResponse(format!(
                "{} tokens with {} vectors",
                tokens.len(),
                vectors.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(GatewayError::MalformedResponse("embedding vectors differ in dimension".into()));
        }
        if vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(GatewayError::MalformedResponse("non-finite embedding component".into()));
        }
        Ok(Self { tokens, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Appends another embedding run, as produced for a later chunk of the same text.
    pub fn extend(&mut self, other: TokenEmbeddings) -> Result<(), GatewayError> {
        if other.dim() != self.dim() {
            return Err(GatewayError::MalformedResponse("chunk embeddings differ in dimension".into()));
        }
        self.tokens.extend(other.tokens);
        self.vectors.extend(other.vectors);
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("prompt exceeds the context budget of {limit} tokens{}", .prompt_tokens.map(|n| format!(" ({n} tokens)")).unwrap_or_default())]
    ContextOverflow { prompt_tokens: Option<usize>, limit: usize },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("backend cannot do this: {0}")]
    UnsupportedCapability(String),
    #[error("no scripted {kind} response for {key}")]
    MissingScript { kind: &'static str, key: String },
    #[error("text exceeds the encoder limit: {0}")]
    EncoderOverflow(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("fixture error: {0}")]
    Fixture(String),
}

impl GatewayError {
    /// Only transport failures are worth another attempt.
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::BackendUnavailable(_))
    }
}

pub trait LanguageModel: Send + Sync {
    /// Greedy generation, returning the sampled tokens and their log-probabilities.
    fn generate(&self, prompt: &RenderedPrompt, params: &GenParams) -> Result<ScoredSequence, GatewayError>;

    /// Log-probabilities of `forced` as the assistant reply to `prompt`.
    fn score_sequence(&self, prompt: &RenderedPrompt, forced: &str) -> Result<ScoredSequence, GatewayError>;
}

pub trait Embedder: Send + Sync {
    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, GatewayError>;
}

impl<T: LanguageModel + ?Sized> LanguageModel for &T {
    fn generate(&self, prompt: &RenderedPrompt, params: &GenParams) -> Result<ScoredSequence, GatewayError> {
        (**self).generate(prompt, params)
    }
    fn score_sequence(&self, prompt: &RenderedPrompt, forced: &str) -> Result<ScoredSequence, GatewayError> {
        (**self).score_sequence(prompt, forced)
    }
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, GatewayError> {
        (**self).embed_tokens(text)
    }
}

/// Retry policy for transport failures: `attempts` tries in total,
/// sleeping `base_delay * 2^k` before retry `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, GatewayError>) -> Result<T, GatewayError> {
        let attempts = self.attempts.max(1);
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_transient() && attempt + 1 < attempts => {
                    let delay = self.base_delay * 2u32.pow(attempt);
                    log::warn!("transient backend failure (attempt {}): {e}; retrying in {delay:?}", attempt + 1);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Wraps a model and counts calls per component, for cost reporting.
#[derive(Debug, Default)]
pub struct CallCounter {
    generate: [AtomicU64; 4],
    score: [AtomicU64; 4],
    embed: AtomicU64,
}

fn slot(c: Component) -> usize {
    match c {
        Component::Qa => 0,
        Component::Qg => 1,
        Component::Ner => 2,
        Component::Weighter => 3,
    }
}

impl CallCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// `component -> (generate calls, score calls)`, plus embedding calls under "embed".
    pub fn snapshot(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for c in Component::ALL {
            out.insert(format!("{c}.generate"), self.generate[slot(c)].load(Ordering::Relaxed));
            out.insert(format!("{c}.score"), self.score[slot(c)].load(Ordering::Relaxed));
        }
        out.insert("embed".into(), self.embed.load(Ordering::Relaxed));
        out
    }

    pub fn total(&self) -> u64 {
        self.snapshot().values().sum()
    }
}

/// A [`LanguageModel`] and [`Embedder`] decorator that records call counts.
pub struct Counted<'a, M: ?Sized> {
    inner: &'a M,
    counter: &'a CallCounter,
}

impl<'a, M: ?Sized> Counted<'a, M> {
    pub fn new(inner: &'a M, counter: &'a CallCounter) -> Self {
        Self { inner, counter }
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Counted<'_, M> {
    fn generate(&self, prompt: &RenderedPrompt, params: &GenParams) -> Result<ScoredSequence, GatewayError> {
        self.counter.generate[slot(prompt.component)].fetch_add(1, Ordering::Relaxed);
        self.inner.generate(prompt, params)
    }

    fn score_sequence(&self, prompt: &RenderedPrompt, forced: &str) -> Result<ScoredSequence, GatewayError> {
        self.counter.score[slot(prompt.component)].fetch_add(1, Ordering::Relaxed);
        self.inner.score_sequence(prompt, forced)
    }
}

impl<M: Embedder + ?Sized> Embedder for Counted<'_, M> {
    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, GatewayError> {
        self.counter.embed.fetch_add(1, Ordering::Relaxed);
        self.inner.embed_tokens(text)
    }
}
