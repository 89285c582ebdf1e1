//! Deterministic backend driven by a JSON fixture.
//!
//! ```json
//! {
//!   "generate":   [{"component": "qa", "user": "<rendered user prompt>",
//!                   "text": "ঢাকা", "tokens": ["ঢাকা"], "logprobs": [-0.1]}],
//!   "score":      [{"component": "qa", "user": "<rendered user prompt>",
//!                   "forced": "উত্তরহীন", "tokens": ["উত্তর", "হীন"], "logprobs": [-2.0, -1.0]}],
//!   "embeddings": [{"text": "ঢাকা নদী", "tokens": ["ঢাকা", "নদী"],
//!                   "vectors": [[1.0, 0.0], [0.0, 1.0]]}]
//! }
//! ```
//!
//! Generation and scoring entries are keyed by component tag plus the exact
//! rendered user text; embeddings by exact text. Keys are compared after NFC.
//! `tokens` may be omitted when there is a single log-probability. Tokens
//! detokenize by plain concatenation.
//!
//! Prompt length is counted as whitespace-separated words of the system and
//! user texts together; prompts over the length budget fail with
//! `ContextOverflow` before any lookup.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Component, Embedder, GatewayError, GenParams, LanguageModel, RenderedPrompt, ScoredSequence, TokenEmbeddings,
    DEFAULT_MAX_SEQUENCE_LENGTH,
};
use crate::text::nfc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedGeneration {
    pub component: Component,
    pub user: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedScore {
    pub component: Component,
    pub user: String,
    pub forced: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEmbedding {
    pub text: String,
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptFixture {
    #[serde(default)]
    pub generate: Vec<ScriptedGeneration>,
    #[serde(default)]
    pub score: Vec<ScriptedScore>,
    #[serde(default)]
    pub embeddings: Vec<ScriptedEmbedding>,
}

type PromptKey = (Component, String);

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    generate: HashMap<PromptKey, ScoredSequence>,
    score: HashMap<(Component, String, String), ScoredSequence>,
    embeddings: HashMap<String, TokenEmbeddings>,
    max_sequence_length: usize,
}

fn sequence(text: &str, tokens: Option<&[String]>, logprobs: &[f64]) -> Result<ScoredSequence, GatewayError> {
    let tokens = match tokens {
        Some(t) => t.iter().map(|t| nfc(t)).collect::<Vec<_>>(),
        None if logprobs.len() == 1 => vec![text.to_owned()],
        None => {
            return Err(GatewayError::Fixture(format!(
                "{text:?}: tokens are required when there are {} log-probabilities",
                logprobs.len()
            )))
        }
    };
    if tokens.concat() != text {
        return Err(GatewayError::Fixture(format!("tokens {tokens:?} do not concatenate to {text:?}")));
    }
    ScoredSequence::new(text.to_owned(), tokens, logprobs.to_vec())
        .map_err(|e| GatewayError::Fixture(format!("{text:?}: {e}")))
}

fn describe(prompt_user: &str) -> String {
    let head: String = prompt_user.chars().take(60).collect();
    if head.len() < prompt_user.len() {
        format!("{head:?}…")
    } else {
        format!("{head:?}")
    }
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptFixture) -> Result<Self, GatewayError> {
        let mut generate = HashMap::new();
        for g in fixture.generate {
            let text = nfc(&g.text);
            let seq = sequence(&text, g.tokens.as_deref(), &g.logprobs)?;
            let key = (g.component, nfc(&g.user));
            if generate.insert(key.clone(), seq).is_some() {
                return Err(GatewayError::Fixture(format!(
                    "duplicate generate entry for {} {}",
                    key.0,
                    describe(&key.1)
                )));
            }
        }
        let mut score = HashMap::new();
        for s in fixture.score {
            let forced = nfc(&s.forced);
            let seq = sequence(&forced, s.tokens.as_deref(), &s.logprobs)?;
            let key = (s.component, nfc(&s.user), forced);
            if score.insert(key.clone(), seq).is_some() {
                return Err(GatewayError::Fixture(format!(
                    "duplicate score entry for {} {} / {:?}",
                    key.0,
                    describe(&key.1),
                    key.2
                )));
            }
        }
        let mut embeddings = HashMap::new();
        for e in fixture.embeddings {
            let text = nfc(&e.text);
            let emb = TokenEmbeddings::new(e.tokens.iter().map(|t| nfc(t)).collect(), e.vectors)
                .map_err(|err| GatewayError::Fixture(format!("embedding for {text:?}: {err}")))?;
            if embeddings.insert(text.clone(), emb).is_some() {
                return Err(GatewayError::Fixture(format!("duplicate embedding for {text:?}")));
            }
        }
        Ok(Self { generate, score, embeddings, max_sequence_length: DEFAULT_MAX_SEQUENCE_LENGTH })
    }

    pub fn from_json(json: &str) -> Result<Self, GatewayError> {
        let fixture: ScriptFixture =
            serde_json::from_str(json).map_err(|e| GatewayError::Fixture(format!("fixture does not parse: {e}")))?;
        Self::new(fixture)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    /// Budget used by [`LanguageModel::score_sequence`], which takes no [`GenParams`].
    pub fn with_max_sequence_length(mut self, limit: usize) -> Self {
        self.max_sequence_length = limit;
        self
    }

    /// Prompt length under this backend's counting rule.
    pub fn prompt_tokens(prompt: &RenderedPrompt) -> usize {
        prompt.system.split_whitespace().count() + prompt.user.split_whitespace().count()
    }

    fn check_budget(prompt: &RenderedPrompt, limit: usize) -> Result<(), GatewayError> {
        let prompt_tokens = Self::prompt_tokens(prompt);
        if prompt_tokens > limit {
            return Err(GatewayError::ContextOverflow { prompt_tokens: Some(prompt_tokens), limit });
        }
        Ok(())
    }
}

impl LanguageModel for ScriptedBackend {
    fn generate(&self, prompt: &RenderedPrompt, params: &GenParams) -> Result<ScoredSequence, GatewayError> {
        Self::check_budget(prompt, params.max_sequence_length)?;
        let key = (prompt.component, nfc(&prompt.user));
        self.generate.get(&key).cloned().ok_or_else(|| GatewayError::MissingScript {
            kind: "generate",
            key: format!("{} {}", prompt.component, describe(&key.1)),
        })
    }

    fn score_sequence(&self, prompt: &RenderedPrompt, forced: &str) -> Result<ScoredSequence, GatewayError> {
        if forced.is_empty() {
            return Err(GatewayError::InvalidRequest("forced sequence is empty".into()));
        }
        Self::check_budget(prompt, self.max_sequence_length)?;
        let key = (prompt.component, nfc(&prompt.user), nfc(forced));
        self.score.get(&key).cloned().ok_or_else(|| GatewayError::MissingScript {
            kind: "score",
            key: format!("{} {} / {:?}", prompt.component, describe(&key.1), key.2),
        })
    }
}

impl Embedder for ScriptedBackend {
    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("cannot embed empty text".into()));
        }
        let key = nfc(text);
        self.embeddings
            .get(&key)
            .cloned()
            .ok_or_else(|| GatewayError::MissingScript { kind: "embedding", key: format!("{key:?}") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(component: Component, user: &str) -> RenderedPrompt {
        RenderedPrompt { component, system: "sys".into(), user: user.into() }
    }

    fn backend() -> ScriptedBackend {
        ScriptedBackend::from_json(
            r#"{
              "generate": [{"component": "qa", "user": "P", "text": "ঢাকা", "logprobs": [-0.1]}],
              "score": [{"component": "qa", "user": "P", "forced": "উত্তরহীন",
                         "tokens": ["উত্তর", "হীন"], "logprobs": [-2.0, -1.0]}],
              "embeddings": [{"text": "ঢাকা নদী", "tokens": ["ঢাকা", "নদী"],
                              "vectors": [[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]]}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn generate_returns_the_scripted_sequence() {
        let out = backend().generate(&prompt(Component::Qa, "P"), &GenParams::default()).unwrap();
        assert_eq!(out, ScoredSequence { text: "ঢাকা".into(), tokens: vec!["ঢাকা".into()], logprobs: vec![-0.1] });
    }

    #[test]
    fn score_returns_forced_logprobs() {
        let out = backend().score_sequence(&prompt(Component::Qa, "P"), "উত্তরহীন").unwrap();
        assert_eq!(out.logprobs, vec![-2.0, -1.0]);
    }

    #[test]
    fn empty_forced_text_is_a_precondition_error() {
        let err = backend().score_sequence(&prompt(Component::Qa, "P"), "").unwrap_err();
        assert!(matches!(err, GatewayError::InvalidRequest(_)));
    }

    #[test]
    fn unscripted_requests_fail_loudly() {
        let b = backend();
        let err = b.generate(&prompt(Component::Qg, "P"), &GenParams::default()).unwrap_err();
        assert!(matches!(err, GatewayError::MissingScript { kind: "generate", .. }));
        let err = b.score_sequence(&prompt(Component::Qa, "P"), "অন্য").unwrap_err();
        assert!(matches!(err, GatewayError::MissingScript { kind: "score", .. }));
        let err = b.embed_tokens("নতুন").unwrap_err();
        assert!(matches!(err, GatewayError::MissingScript { kind: "embedding", .. }));
    }

    #[test]
    fn overlong_prompt_overflows_the_budget() {
        let user = vec!["শব্দ"; 2048].join(" ");
        let err = backend().generate(&prompt(Component::Qa, &user), &GenParams::default()).unwrap_err();
        assert_eq!(err, GatewayError::ContextOverflow { prompt_tokens: Some(2049), limit: 2048 });
    }

    #[test]
    fn embeddings_are_scripted_and_repeatable() {
        let b = backend();
        let a = b.embed_tokens("ঢাকা নদী").unwrap();
        assert_eq!(a.tokens, vec!["ঢাকা", "নদী"]);
        assert_eq!(a.vectors.len(), 2);
        assert_eq!(b.embed_tokens("ঢাকা নদী").unwrap(), a);
    }

    #[test]
    fn keys_match_across_normalization_forms() {
        let b = ScriptedBackend::from_json(
            r#"{"generate": [{"component": "ner", "user": "কো", "text": "x", "logprobs": [-1.0]}]}"#,
        )
        .unwrap();
        // same user text, decomposed vowel sign
        let out = b.generate(&prompt(Component::Ner, "\u{0995}\u{09C7}\u{09BE}"), &GenParams::default());
        assert!(out.is_ok());
    }

    #[test]
    fn fixture_tokens_must_concatenate_to_the_text() {
        let err = ScriptedBackend::from_json(
            r#"{"generate": [{"component": "qa", "user": "P", "text": "ab", "tokens": ["a", "c"], "logprobs": [-1.0, -1.0]}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, GatewayError::Fixture(_)));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = ScriptedBackend::from_json(
            r#"{"generate": [{"component": "qa", "user": "P", "text": "a", "logprobs": [-1.0]},
                             {"component": "qa", "user": "P", "text": "b", "logprobs": [-1.0]}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, GatewayError::Fixture(_)));
    }
}
