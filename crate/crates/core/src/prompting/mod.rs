//! Prompt templates for the four model roles and parsers for their replies.
//!
//! Templates are JSON data files (`{"component", "system", "user"}`); the
//! four Bangla defaults under `prompts/` are compiled in, and a directory of
//! replacements can be loaded at runtime. Placeholders are `{context}`,
//! `{question}` and `{answer}`. Any other `{identifier}` is an error; braces
//! around anything that is not an identifier are plain text.

mod parse;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Component, RenderedPrompt};

pub use parse::{parse_ner_output, parse_question, parse_short_answer, parse_weight_output, WeightParse, CANDIDATE_TRIM_CHARS};

pub const PLACEHOLDERS: [&str; 3] = ["context", "question", "answer"];

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("{component} template: no binding for {{{name}}}")]
    MissingBinding { component: Component, name: String },
    #[error("{component} template: unknown placeholder {{{name}}}")]
    UnknownPlaceholder { component: Component, name: String },
    #[error("{component} template must use exactly {expected:?}, found {found:?}")]
    WrongPlaceholders { component: Component, expected: Vec<&'static str>, found: Vec<String> },
    #[error("template file {path}: {message}")]
    Load { path: String, message: String },
    #[error("answer is empty after normalization")]
    EmptyAnswer,
    #[error("question is empty after normalization")]
    EmptyQuestion,
}

/// Placeholders each component's user template must contain.
pub fn required_placeholders(component: Component) -> &'static [&'static str] {
    match component {
        Component::Qa => &["context", "question"],
        Component::Qg => &["context", "answer"],
        Component::Ner => &["context"],
        Component::Weighter => &["context", "question"],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub component: Component,
    pub system: String,
    pub user: String,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

/// Splits a template into literal text and `{identifier}` slots.
fn pieces(template: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let ident_len = after
            .char_indices()
            .take_while(|(_, c)| c.is_ascii_alphanumeric() || *c == '_')
            .map(|(i, c)| i + c.len_utf8())
            .last()
            .unwrap_or(0);
        if ident_len > 0 && after[ident_len..].starts_with('}') {
            out.push(Piece::Text(&rest[..open]));
            out.push(Piece::Slot(&after[..ident_len]));
            rest = &after[ident_len + 1..];
        } else {
            out.push(Piece::Text(&rest[..=open]));
            rest = after;
        }
    }
    out.push(Piece::Text(rest));
    out
}

impl PromptTemplate {
    pub fn new(component: Component, system: impl Into<String>, user: impl Into<String>) -> Result<Self, PromptError> {
        let t = Self { component, system: system.into(), user: user.into() };
        t.validate()?;
        Ok(t)
    }

    pub fn from_json(json: &str) -> Result<Self, PromptError> {
        let t: Self = serde_json::from_str(json)
            .map_err(|e| PromptError::Load { path: "<inline>".into(), message: e.to_string() })?;
        t.validate()?;
        Ok(t)
    }

    /// Placeholder names used in the user template, deduplicated.
    pub fn placeholders(&self) -> BTreeSet<String> {
        pieces(&self.user)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.to_owned()),
                Piece::Text(_) => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for text in [&self.system, &self.user] {
            for p in pieces(text) {
                if let Piece::Slot(name) = p {
                    if !PLACEHOLDERS.contains(&name) {
                        return Err(PromptError::UnknownPlaceholder { component: self.component, name: name.into() });
                    }
                }
            }
        }
        let found = self.placeholders();
        let expected = required_placeholders(self.component);
        if found.len() != expected.len() || !expected.iter().all(|e| found.contains(*e)) {
            return Err(PromptError::WrongPlaceholders {
                component: self.component,
                expected: expected.to_vec(),
                found: found.into_iter().collect(),
            });
        }
        Ok(())
    }

    fn fill(&self, template: &str, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::with_capacity(template.len());
        for p in pieces(template) {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    if !PLACEHOLDERS.contains(&name) {
                        return Err(PromptError::UnknownPlaceholder { component: self.component, name: name.into() });
                    }
                    let value = bindings
                        .iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| PromptError::MissingBinding { component: self.component, name: name.into() })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }

    /// Substitutes bindings into both messages. Binding values are inserted
    /// verbatim and never re-scanned for placeholders.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<RenderedPrompt, PromptError> {
        Ok(RenderedPrompt {
            component: self.component,
            system: self.fill(&self.system, bindings)?,
            user: self.fill(&self.user, bindings)?,
        })
    }
}

/// One template per component.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub qa: PromptTemplate,
    pub qg: PromptTemplate,
    pub ner: PromptTemplate,
    pub weighter: PromptTemplate,
}

const DEFAULT_QA: &str = include_str!("../../prompts/qa.json");
const DEFAULT_QG: &str = include_str!("../../prompts/qg.json");
const DEFAULT_NER: &str = include_str!("../../prompts/ner.json");
const DEFAULT_WEIGHTER: &str = include_str!("../../prompts/weighter.json");

impl Default for PromptSet {
    /// The shipped Bangla templates.
    fn default() -> Self {
        let load = |s: &str| PromptTemplate::from_json(s).expect("shipped template is valid");
        Self {
            qa: load(DEFAULT_QA),
            qg: load(DEFAULT_QG),
            ner: load(DEFAULT_NER),
            weighter: load(DEFAULT_WEIGHTER),
        }
    }
}

impl PromptSet {
    /// Loads `qa.json`, `qg.json`, `ner.json` and `weighter.json` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let load = |component: Component| -> Result<PromptTemplate, PromptError> {
            let path = dir.join(format!("{}.json", component.tag()));
            let err = |message: String| PromptError::Load { path: path.display().to_string(), message };
            let json = std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
            let t: PromptTemplate = serde_json::from_str(&json).map_err(|e| err(e.to_string()))?;
            if t.component != component {
                return Err(err(format!("declares component {}", t.component)));
            }
            t.validate()?;
            Ok(t)
        };
        Ok(Self {
            qa: load(Component::Qa)?,
            qg: load(Component::Qg)?,
            ner: load(Component::Ner)?,
            weighter: load(Component::Weighter)?,
        })
    }

    pub fn get(&self, component: Component) -> &PromptTemplate {
        match component {
            Component::Qa => &self.qa,
            Component::Qg => &self.qg,
            Component::Ner => &self.ner,
            Component::Weighter => &self.weighter,
        }
    }

    pub fn qa(&self, context: &str, question: &str) -> Result<RenderedPrompt, PromptError> {
        self.qa.render(&[("context", context), ("question", question)])
    }

    pub fn qg(&self, context: &str, answer: &str) -> Result<RenderedPrompt, PromptError> {
        self.qg.render(&[("context", context), ("answer", answer)])
    }

    pub fn ner(&self, context: &str) -> Result<RenderedPrompt, PromptError> {
        self.ner.render(&[("context", context)])
    }

    pub fn weighter(&self, context: &str, question: &str) -> Result<RenderedPrompt, PromptError> {
        self.weighter.render(&[("context", context), ("question", question)])
    }
}
