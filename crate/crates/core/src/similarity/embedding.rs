use crate::gateway::{Embedder, TokenEmbeddings};

use super::{Metric, SimilarityError, SimilarityScore};

/// Cosine of two vectors, 0 if either has zero norm, clipped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn check_dims(a: &TokenEmbeddings, b: &TokenEmbeddings) -> Result<(), SimilarityError> {
    if a.dim() != b.dim() {
        return Err(SimilarityError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

/// Mean over `from` tokens of the best cosine against any `to` token.
fn greedy_mean(from: &TokenEmbeddings, to: &TokenEmbeddings) -> f64 {
    let total: f64 = from
        .vectors
        .iter()
        .map(|f| to.vectors.iter().map(|t| cosine(f, t)).fold(f64::NEG_INFINITY, f64::max))
        .sum();
    total / from.len() as f64
}

/// Greedy-matching recall over reference tokens, before clamping.
pub fn greedy_recall(reference: &TokenEmbeddings, candidate: &TokenEmbeddings) -> Result<f64, SimilarityError> {
    check_dims(reference, candidate)?;
    Ok(greedy_mean(reference, candidate))
}

/// Greedy-matching precision over candidate tokens, before clamping.
pub fn greedy_precision(reference: &TokenEmbeddings, candidate: &TokenEmbeddings) -> Result<f64, SimilarityError> {
    check_dims(reference, candidate)?;
    Ok(greedy_mean(candidate, reference))
}

fn embed_pair(
    reference: &str,
    candidate: &str,
    embedder: &dyn Embedder,
) -> Result<(TokenEmbeddings, TokenEmbeddings), SimilarityError> {
    if reference.trim().is_empty() {
        return Err(SimilarityError::EmptyText("reference"));
    }
    if candidate.trim().is_empty() {
        return Err(SimilarityError::EmptyText("candidate"));
    }
    Ok((embedder.embed_tokens(reference)?, embedder.embed_tokens(candidate)?))
}

/// BERTScore recall of `candidate` against `reference`, clamped to [0, 1].
pub fn bertscore_recall(
    reference: &str,
    candidate: &str,
    embedder: &dyn Embedder,
) -> Result<SimilarityScore, SimilarityError> {
    let (r, c) = embed_pair(reference, candidate, embedder)?;
    Ok(SimilarityScore::new(Metric::BertscoreR, greedy_recall(&r, &c)?))
}

/// Harmonic mean of greedy precision and recall, each clamped to [0, 1] first.
pub fn bertscore_f1(
    reference: &str,
    candidate: &str,
    embedder: &dyn Embedder,
) -> Result<SimilarityScore, SimilarityError> {
    let (r, c) = embed_pair(reference, candidate, embedder)?;
    let recall = greedy_recall(&r, &c)?.clamp(0.0, 1.0);
    let precision = greedy_precision(&r, &c)?.clamp(0.0, 1.0);
    Ok(SimilarityScore::new(Metric::BertscoreF1, crate::eval::harmonic_mean(precision, recall)))
}

pub fn mean_pool(e: &TokenEmbeddings) -> Vec<f64> {
    let mut acc = vec![0.0; e.dim()];
    for v in &e.vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = e.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Cosine of mean-pooled vectors mapped from [-1, 1] onto [0, 1].
pub fn pooled_cosine(reference: &TokenEmbeddings, candidate: &TokenEmbeddings) -> Result<f64, SimilarityError> {
    check_dims(reference, candidate)?;
    Ok((cosine(&mean_pool(reference), &mean_pool(candidate)) + 1.0) / 2.0)
}

pub fn cosine_similarity(
    reference: &str,
    candidate: &str,
    embedder: &dyn Embedder,
) -> Result<SimilarityScore, SimilarityError> {
    let (r, c) = embed_pair(reference, candidate, embedder)?;
    Ok(SimilarityScore::new(Metric::Cosine, pooled_cosine(&r, &c)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedBackend;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn emb(vectors: Vec<Vec<f64>>) -> TokenEmbeddings {
        let tokens = (0..vectors.len()).map(|i| format!("t{i}")).collect();
        TokenEmbeddings::new(tokens, vectors).unwrap()
    }

    fn fixture() -> ScriptedBackend {
        // "ক" against "খ গ": cosines 0.2 and 0.7 (unit vectors)
        let s08 = (1.0f64 - 0.04).sqrt();
        let s07 = (1.0f64 - 0.49).sqrt();
        let json = serde_json::json!({
            "embeddings": [
                {"text": "ক", "tokens": ["ক"], "vectors": [[1.0, 0.0, 0.0]]},
                {"text": "খ গ", "tokens": ["খ", "গ"], "vectors": [[0.2, s08, 0.0], [0.7, 0.0, s07]]},
                {"text": "ঘ ঙ", "tokens": ["ঘ", "ঙ"], "vectors": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]},
                {"text": "ঘ", "tokens": ["ঘ"], "vectors": [[1.0, 0.0, 0.0]]},
                {"text": "চ", "tokens": ["চ"], "vectors": [[0.0, 1.0, 0.0]]},
                {"text": "ছ", "tokens": ["ছ"], "vectors": [[3.0, 4.0, 0.0]]},
                {"text": "জ", "tokens": ["জ"], "vectors": [[4.0, 3.0, 0.0]]},
            ]
        });
        ScriptedBackend::from_json(&json.to_string()).unwrap()
    }

    #[test]
    fn recall_picks_the_best_candidate_token() {
        let r = bertscore_recall("ক", "খ গ", &fixture()).unwrap();
        assert_abs_diff_eq!(r.value, 0.7, epsilon = 1e-12);
        assert_eq!(r.metric, Metric::BertscoreR);
    }

    #[test]
    fn self_match_scores_one() {
        let b = fixture();
        for t in ["ক", "খ গ", "ছ"] {
            assert_abs_diff_eq!(bertscore_recall(t, t, &b).unwrap().value, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(bertscore_f1(t, t, &b).unwrap().value, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(cosine_similarity(t, t, &b).unwrap().value, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn f1_of_half_precision_full_recall() {
        // reference "ঘ" is matched exactly; candidate token "ঙ" is orthogonal
        let b = fixture();
        let r = bertscore_recall("ঘ", "ঘ ঙ", &b).unwrap().value;
        let f = bertscore_f1("ঘ", "ঘ ঙ", &b).unwrap().value;
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn cosine_maps_orthogonal_to_half() {
        assert_abs_diff_eq!(cosine_similarity("ঘ", "চ", &fixture()).unwrap().value, 0.5, epsilon = 1e-15);
        // (3,4)·(4,3) / 25 = 24/25, mapped to (0.96 + 1) / 2
        assert_abs_diff_eq!(cosine_similarity("ছ", "জ", &fixture()).unwrap().value, 0.98, epsilon = 1e-15);
    }

    #[test]
    fn empty_text_is_rejected() {
        assert_eq!(bertscore_recall(" ", "ক", &fixture()), Err(SimilarityError::EmptyText("reference")));
    }

    #[test]
    fn embedding_failures_propagate() {
        assert!(matches!(
            bertscore_recall("ক", "অজানা", &fixture()),
            Err(SimilarityError::EmbeddingFailure(_))
        ));
    }

    #[test]
    fn recall_is_asymmetric() {
        let b = fixture();
        let forward = bertscore_recall("ঘ", "ঘ ঙ", &b).unwrap().value;
        let backward = bertscore_recall("ঘ ঙ", "ঘ", &b).unwrap().value;
        assert_abs_diff_eq!(forward, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(backward, 0.5, epsilon = 1e-12);
    }

    fn matrix(rows: std::ops::Range<usize>, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, dim), rows)
    }

    proptest! {
        #[test]
        fn appending_candidate_tokens_never_lowers_recall(
            (r, c, extra) in (1usize..5).prop_flat_map(|d| (matrix(1..6, d), matrix(1..6, d), matrix(1..4, d)))
        ) {
            let reference = emb(r);
            let before = greedy_recall(&reference, &emb(c.clone())).unwrap();
            let mut grown = c;
            grown.extend(extra);
            let after = greedy_recall(&reference, &emb(grown)).unwrap();
            prop_assert!(after >= before);
        }
    }
}
