//! The evaluation procedure.
//!
//! For a pair (document D, summary S):
//!
//! 1. Candidate answers are extracted from each context by the NER prompt.
//! 2. For every candidate r a question `q = QG(C, r)` is generated and
//!    answered back against its own context, `a = QA(C, q)`. The pair
//!    (q, r) is kept iff `sim(a, r) ≥ τ`, giving P(S) and P(D).
//! 3. Precision is the mean of `sim(QA(D, q), r)` over P(S).
//! 4. Recall is the weighted mean of answerability `Ans(S, q)` over P(D),
//!    with weights from the weighter prompt.
//! 5. The final score is the harmonic mean of the two.
//!
//! `sim` is always [`crate::similarity::bertscore_recall`] with the gold
//! answer as reference.

mod evaluator;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{ContextTag, PairError};
use crate::gateway::{ComponentParams, GatewayError, ScoredSequence};
use crate::prompting::PromptError;

pub use evaluator::{ContextStage, Evaluator, PrecisionStage, RecallStage};

/// Default text scored as the "cannot answer" alternative.
pub const DEFAULT_UNANSWERABLE: &str = "উত্তরহীন";
pub const DEFAULT_TAU: f64 = 0.60;
pub const DEFAULT_WEIGHT_FALLBACK: f64 = 0.5;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Round-trip admission threshold (inclusive).
    pub tau: f64,
    pub unanswerable_epsilon: String,
    pub gen_params: ComponentParams,
    /// Weight used when the weighter's reply holds no number.
    pub weight_fallback: f64,
    /// Keep at most this many candidates per context.
    pub max_candidates: Option<usize>,
    /// Per-context bound on candidates processed at once.
    pub concurrency: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            unanswerable_epsilon: DEFAULT_UNANSWERABLE.to_string(),
            gen_params: ComponentParams::default(),
            weight_fallback: DEFAULT_WEIGHT_FALLBACK,
            max_candidates: None,
            concurrency: DEFAULT_CONCURRENCY,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} is outside [0, 1]", self.tau));
        }
        if !(0.0..=1.0).contains(&self.weight_fallback) {
            return bad(format!("weight_fallback {} is outside [0, 1]", self.weight_fallback));
        }
        if self.unanswerable_epsilon.trim().is_empty() {
            return bad("unanswerable_epsilon is empty".into());
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.max_candidates == Some(0) {
            return bad("max_candidates must be at least 1 when set".into());
        }
        for (name, p) in [
            ("qa", &self.gen_params.qa),
            ("qg", &self.gen_params.qg),
            ("ner", &self.gen_params.ner),
            ("weighter", &self.gen_params.weighter),
        ] {
            p.validate().map_err(|m| PipelineError::Config(format!("gen_params.{name}: {m}")))?;
        }
        Ok(())
    }
}

/// An admitted question with its gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub gold_answer: String,
    pub origin_context: ContextTag,
    pub roundtrip_similarity: f64,
    /// Set for document questions once weighted.
    pub weight: Option<f64>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{stage}: {source}")]
    Backend {
        stage: &'static str,
        #[source]
        source: GatewayError,
    },
    #[error("internal inconsistency: {0}")]
    Internal(String),
}

impl PipelineError {
    pub(crate) fn backend(stage: &'static str) -> impl FnOnce(GatewayError) -> Self {
        move |source| PipelineError::Backend { stage, source }
    }
}

/// Round-trip admission rule: similarity at or above `tau`.
pub fn admits(similarity: f64, tau: f64) -> bool {
    similarity >= tau
}

/// Length-normalized log-likelihood: the mean token log-probability.
pub fn sequence_loglikelihood(scored: &ScoredSequence) -> f64 {
    scored.logprobs.iter().sum::<f64>() / scored.logprobs.len() as f64
}

/// `exp(a) / (exp(a) + exp(e))` evaluated as a logistic function of `a − e`
/// so that neither exponential can overflow or underflow to 0/0.
pub fn answerability_from_loglik(ll_answer: f64, ll_unanswerable: f64) -> f64 {
    let d = ll_answer - ll_unanswerable;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// Result of aggregating answerability into recall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecallAggregate {
    Weighted(f64),
    /// Every weight was zero; plain mean of the answerability values.
    Unweighted(f64),
    /// No document questions survived filtering.
    Empty,
}

impl RecallAggregate {
    pub fn value(self) -> f64 {
        match self {
            RecallAggregate::Weighted(v) | RecallAggregate::Unweighted(v) => v,
            RecallAggregate::Empty => 0.0,
        }
    }
}

/// `Σ w·a / Σ w` over `(weight, answerability)` items, summed in order.
///
/// The quotient is clamped into `[min a, max a]` over positively weighted
/// items so rounding cannot push it outside the convex hull.
pub fn weighted_recall(items: &[(f64, f64)]) -> RecallAggregate {
    if items.is_empty() {
        return RecallAggregate::Empty;
    }
    let total: f64 = items.iter().map(|(w, _)| w).sum();
    if total <= 0.0 {
        let mean = items.iter().map(|(_, a)| a).sum::<f64>() / items.len() as f64;
        return RecallAggregate::Unweighted(mean);
    }
    let num: f64 = items.iter().map(|(w, a)| w * a).sum();
    let active = items.iter().filter(|(w, _)| *w > 0.0).map(|(_, a)| *a);
    let (lo, hi) = active.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a), hi.max(a)));
    RecallAggregate::Weighted((num / total).clamp(lo, hi))
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn final_score(precision: f64, recall: f64) -> f64 {
    crate::eval::harmonic_mean(precision, recall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn seq(logprobs: &[f64]) -> ScoredSequence {
        let tokens = logprobs.iter().map(|_| "x".to_string()).collect();
        ScoredSequence::new("x".repeat(logprobs.len()), tokens, logprobs.to_vec()).unwrap()
    }

    #[test]
    fn loglikelihood_is_the_token_mean() {
        assert_eq!(sequence_loglikelihood(&seq(&[-1.0, -3.0])), -2.0);
        assert_eq!(sequence_loglikelihood(&seq(&[-0.7])), -0.7);
        assert_eq!(sequence_loglikelihood(&seq(&[0.0, 0.0])), 0.0);
    }

    #[test]
    fn answerability_examples() {
        assert_eq!(answerability_from_loglik(-3.2, -3.2), 0.5);
        assert_abs_diff_eq!(answerability_from_loglik(0.0, -(3f64.ln())), 0.75, epsilon = 1e-15);
        let tiny = answerability_from_loglik(-50.0, 0.0);
        assert!(tiny > 0.0);
        assert_abs_diff_eq!(tiny / 1.928_749_847_963_918e-22, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn admission_bound_is_inclusive() {
        assert!(admits(0.60, 0.60));
        assert!(!admits(0.59, 0.60));
        assert!(!admits(0.60 - 1e-9, 0.60));
    }

    #[test]
    fn recall_examples() {
        assert_eq!(weighted_recall(&[(1.0, 0.2), (0.0, 0.9)]), RecallAggregate::Weighted(0.2));
        assert_abs_diff_eq!(weighted_recall(&[(0.5, 0.4), (0.5, 0.8)]).value(), 0.6, epsilon = 1e-15);
        assert_eq!(weighted_recall(&[]), RecallAggregate::Empty);
        assert_eq!(weighted_recall(&[]).value(), 0.0);
        assert_eq!(weighted_recall(&[(0.0, 0.2), (0.0, 0.6)]), RecallAggregate::Unweighted(0.4));
    }

    #[test]
    fn final_score_examples() {
        assert_eq!(final_score(0.8, 0.8), 0.8);
        assert_abs_diff_eq!(final_score(0.6, 0.3), 0.4, epsilon = 1e-15);
        assert_eq!(final_score(0.0, 0.9), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig { tau: 1.5, ..Default::default() };
        assert!(matches!(bad.validate(), Err(PipelineError::Config(_))));
        let bad = PipelineConfig { unanswerable_epsilon: " ".into(), ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
