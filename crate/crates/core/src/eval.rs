//! Evaluation records: the input pair, the final scores, and the step-wise
//! trace each pipeline stage appends to.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

/// Version stamped into every serialized trace. Readers reject other values.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum PairError {
    #[error("pair {id:?}: {field} is empty")]
    EmptyText { id: String, field: &'static str },
    #[error("pair {id:?}: human_score {value} is outside [0, 1]")]
    RangeError { id: String, value: f64 },
}

/// A source document and a candidate summary.
///
/// Fields beyond `id`, `document`, `summary` and `human_score` (annotation
/// metadata and the like) are carried through untouched in `extra`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub id: String,
    pub document: String,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_score: Option<f64>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl EvalPair {
    pub fn new(id: impl Into<String>, document: impl Into<String>, summary: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            document: document.into(),
            summary: summary.into(),
            human_score: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_human_score(mut self, score: f64) -> Self {
        self.human_score = Some(score);
        self
    }
}

/// Checks the pair invariants and returns it with both texts NFC-normalized.
pub fn validate_pair(mut pair: EvalPair) -> Result<EvalPair, PairError> {
    if pair.document.trim().is_empty() {
        return Err(PairError::EmptyText { id: pair.id, field: "document" });
    }
    if pair.summary.trim().is_empty() {
        return Err(PairError::EmptyText { id: pair.id, field: "summary" });
    }
    if let Some(h) = pair.human_score {
        if !(0.0..=1.0).contains(&h) {
            return Err(PairError::RangeError { id: pair.id, value: h });
        }
    }
    pair.document = text::nfc(&pair.document);
    pair.summary = text::nfc(&pair.summary);
    Ok(pair)
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn harmonic_mean(precision: f64, recall: f64) -> f64 {
    let sum = precision + recall;
    if sum <= 0.0 {
        return 0.0;
    }
    if precision == recall {
        return precision;
    }
    // Rounding can push the quotient an ulp past the larger argument.
    (2.0 * precision * recall / sum).clamp(precision.min(recall), precision.max(recall))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when either filtered question set was empty or both scores were zero.
    pub degenerate: bool,
}

impl EvalScores {
    pub fn new(precision: f64, recall: f64, degenerate: bool) -> Self {
        let f1 = harmonic_mean(precision, recall);
        Self {
            precision,
            recall,
            f1,
            degenerate: degenerate || precision + recall <= 0.0,
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextTag {
    Summary,
    Document,
}

impl fmt::Display for ContextTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextTag::Summary => "summary",
            ContextTag::Document => "document",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningCode {
    NoCandidates,
    QuestionGenerationFailed,
    EmptyQuestion,
    RoundTripFailed,
    EmptyAnswer,
    NoQaPairs,
    PrecisionAnswerFailed,
    WeightFallback,
    ZeroWeights,
    DegenerateScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub code: WarningCode,
    pub message: String,
}

impl Warning {
    pub fn new(code: WarningCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

/// One question-generation attempt, admitted or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QgRecord {
    pub context: ContextTag,
    pub candidate: String,
    pub question: String,
    pub roundtrip_answer: String,
    pub similarity: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecord {
    pub question: String,
    pub gold_answer: String,
    /// `None` when answering against the document failed.
    pub source_answer: Option<String>,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerabilityRecord {
    pub question: String,
    pub generated_answer: String,
    pub ll_answer: f64,
    pub ll_unanswerable: f64,
    pub answerability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub question: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Candidates {
    pub summary: Vec<String>,
    pub document: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceStages {
    pub candidates: Candidates,
    pub question_generation: Vec<QgRecord>,
    pub precision: Vec<PrecisionRecord>,
    pub recall: Vec<AnswerabilityRecord>,
    pub weights: Vec<WeightRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace schema version {found} is not supported (expected {expected})")]
    SchemaMismatch { found: u32, expected: u32 },
    #[error("trace does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("trace violates invariant: {0}")]
    Invariant(String),
}

/// The full diagnostic record of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTrace {
    pub schema_version: u32,
    pub pair_id: String,
    /// Round-trip admission threshold in force for this run.
    pub tau: f64,
    pub stages: TraceStages,
    pub scores: EvalScores,
    pub warnings: Vec<Warning>,
}

impl EvalTrace {
    pub fn new(pair_id: impl Into<String>, tau: f64) -> Self {
        Self {
            schema_version: TRACE_SCHEMA_VERSION,
            pair_id: pair_id.into(),
            tau,
            stages: TraceStages::default(),
            scores: EvalScores::zero(),
            warnings: Vec::new(),
        }
    }

    pub fn accepted(&self, context: ContextTag) -> impl Iterator<Item = &QgRecord> {
        self.stages
            .question_generation
            .iter()
            .filter(move |r| r.accepted && r.context == context)
    }

    pub fn check_invariants(&self) -> Result<(), TraceError> {
        let bad = |msg: String| Err(TraceError::Invariant(msg));
        for r in &self.stages.question_generation {
            if r.accepted && r.similarity < self.tau {
                return bad(format!(
                    "accepted question {:?} has similarity {} below tau {}",
                    r.question, r.similarity, self.tau
                ));
            }
            if !r.accepted && r.similarity >= self.tau {
                return bad(format!(
                    "rejected question {:?} has similarity {} at or above tau {}",
                    r.question, r.similarity, self.tau
                ));
            }
        }
        let summary = self.accepted(ContextTag::Summary).count();
        let document = self.accepted(ContextTag::Document).count();
        if self.stages.precision.len() != summary {
            return bad(format!(
                "{} precision records for {} accepted summary questions",
                self.stages.precision.len(),
                summary
            ));
        }
        if self.stages.recall.len() != document || self.stages.weights.len() != document {
            return bad(format!(
                "{} recall and {} weight records for {} accepted document questions",
                self.stages.recall.len(),
                self.stages.weights.len(),
                document
            ));
        }
        let s = &self.scores;
        for (name, v) in [("precision", s.precision), ("recall", s.recall), ("f1", s.f1)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Serializes a trace as pretty-printed JSON with a fixed field order.
///
/// Floats are written in shortest round-trip form, so every value reads
/// back bit-identically.
pub fn serialize_trace(trace: &EvalTrace) -> String {
    let mut out = serde_json::to_string_pretty(trace).expect("trace serialization is infallible");
    out.push('\n');
    out
}

pub fn deserialize_trace(json: &str) -> Result<EvalTrace, TraceError> {
    let raw: serde_json::Value = serde_json::from_str(json)?;
    let found = raw
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .unwrap_or(0) as u32;
    if found != TRACE_SCHEMA_VERSION {
        return Err(TraceError::SchemaMismatch { found, expected: TRACE_SCHEMA_VERSION });
    }
    Ok(serde_json::from_value(raw)?)
}
