//! Answer-level similarity.
//!
//! The pipeline's similarity function is [`bertscore_recall`]: every
//! reference token is matched greedily to its most similar candidate token
//! and the cosines are averaged over the reference. No IDF weighting and no
//! baseline rescaling are applied. The remaining metrics exist for metric
//! comparison runs. Every metric returns a value in [0, 1].

mod embedding;
mod lexical;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Embedder, GatewayError};

pub use embedding::{
    bertscore_f1, bertscore_recall, cosine, cosine_similarity, greedy_precision, greedy_recall, mean_pool,
    pooled_cosine,
};
pub use lexical::{bleu, cer_similarity, chrf, exact_match, levenshtein, lexical_metrics, token_f1, wer_similarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    BertscoreR,
    BertscoreF1,
    Cosine,
    Chrf,
    TokenF1,
    Bleu,
    ExactMatch,
    CerSim,
    WerSim,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::BertscoreR,
        Metric::BertscoreF1,
        Metric::Cosine,
        Metric::Chrf,
        Metric::TokenF1,
        Metric::Bleu,
        Metric::ExactMatch,
        Metric::CerSim,
        Metric::WerSim,
    ];

    pub const LEXICAL: [Metric; 6] =
        [Metric::Chrf, Metric::TokenF1, Metric::Bleu, Metric::ExactMatch, Metric::CerSim, Metric::WerSim];

    pub fn label(self) -> &'static str {
        match self {
            Metric::BertscoreR => "BERTScore-Recall",
            Metric::BertscoreF1 => "BERTScore-F1",
            Metric::Cosine => "Cosine Similarity",
            Metric::Chrf => "chrF",
            Metric::TokenF1 => "Token-F1",
            Metric::Bleu => "BLEU",
            Metric::ExactMatch => "Exact Match",
            Metric::CerSim => "CER Similarity",
            Metric::WerSim => "WER Similarity",
        }
    }

    pub fn needs_embedder(self) -> bool {
        matches!(self, Metric::BertscoreR | Metric::BertscoreF1 | Metric::Cosine)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub metric: Metric,
}

impl SimilarityScore {
    pub(crate) fn new(metric: Metric, value: f64) -> Self {
        debug_assert!(value.is_finite(), "{metric} produced {value}");
        Self { value: value.clamp(0.0, 1.0), metric }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("cannot score empty {0} text")]
    EmptyText(&'static str),
    #[error("embedding failed: {0}")]
    EmbeddingFailure(#[from] GatewayError),
    #[error("reference and candidate embeddings differ in dimension ({0} vs {1})")]
    DimensionMismatch(usize, usize),
}

/// Computes one metric by name.
pub fn score(
    metric: Metric,
    reference: &str,
    candidate: &str,
    embedder: Option<&dyn Embedder>,
) -> Result<SimilarityScore, SimilarityError> {
    let need = || embedder.ok_or(SimilarityError::EmbeddingFailure(GatewayError::InvalidRequest(
        format!("{metric} needs an embedder"),
    )));
    Ok(match metric {
        Metric::BertscoreR => bertscore_recall(reference, candidate, need()?)?,
        Metric::BertscoreF1 => bertscore_f1(reference, candidate, need()?)?,
        Metric::Cosine => cosine_similarity(reference, candidate, need()?)?,
        Metric::Chrf => chrf(reference, candidate),
        Metric::TokenF1 => token_f1(reference, candidate),
        Metric::Bleu => bleu(reference, candidate),
        Metric::ExactMatch => exact_match(reference, candidate),
        Metric::CerSim => cer_similarity(reference, candidate),
        Metric::WerSim => wer_similarity(reference, candidate),
    })
}
