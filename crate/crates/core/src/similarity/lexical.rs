//! Surface-overlap metrics.
//!
//! Word-level metrics tokenize with [`crate::text::match_tokens`]: NFC,
//! punctuation and dandas replaced by spaces, lowercased, split on
//! whitespace. No morphological segmentation is attempted.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use crate::text::{match_tokens, nfc, normalize_for_match};

use super::{Metric, SimilarityScore};

const CHRF_ORDER: usize = 6;
const CHRF_BETA: f64 = 2.0;
const BLEU_ORDER: usize = 4;

fn ngram_counts<T: Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || items.len() < n {
        return counts;
    }
    for w in items.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// (clipped matches, hypothesis n-grams, reference n-grams)
fn ngram_overlap<T: Hash + Eq + Clone>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches = h.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum();
    (matches, hyp.len().saturating_sub(n - 1), reference.len().saturating_sub(n - 1))
}

/// Character n-gram F-score (orders 1..=6, beta = 2), whitespace ignored.
/// Per-order F-scores are averaged over the orders both sides can fill.
pub fn chrf(reference: &str, candidate: &str) -> SimilarityScore {
    let chars = |s: &str| nfc(s).chars().filter(|c| !c.is_whitespace()).collect::<Vec<_>>();
    let (r, h) = (chars(reference), chars(candidate));
    if r.is_empty() && h.is_empty() {
        return SimilarityScore::new(Metric::Chrf, 1.0);
    }
    let beta2 = CHRF_BETA * CHRF_BETA;
    let mut total = 0.0;
    let mut effective = 0;
    for n in 1..=CHRF_ORDER {
        let (m, nh, nr) = ngram_overlap(&h, &r, n);
        if nh == 0 || nr == 0 {
            continue;
        }
        effective += 1;
        let p = m as f64 / nh as f64;
        let rc = m as f64 / nr as f64;
        let denom = beta2 * p + rc;
        if denom > 0.0 {
            total += (1.0 + beta2) * p * rc / denom;
        }
    }
    let value = if effective == 0 { 0.0 } else { total / effective as f64 };
    SimilarityScore::new(Metric::Chrf, value)
}

/// Bag-of-tokens F1.
pub fn token_f1(reference: &str, candidate: &str) -> SimilarityScore {
    let (r, h) = (match_tokens(reference), match_tokens(candidate));
    let value = match (r.is_empty(), h.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => {
            let (common, _, _) = ngram_overlap(&h, &r, 1);
            if common == 0 {
                0.0
            } else {
                let p = common as f64 / h.len() as f64;
                let rc = common as f64 / r.len() as f64;
                2.0 * p * rc / (p + rc)
            }
        }
    };
    SimilarityScore::new(Metric::TokenF1, value)
}

/// Sentence BLEU up to 4-grams with add-one smoothing on every order's
/// match and total counts, times the brevity penalty.
pub fn bleu(reference: &str, candidate: &str) -> SimilarityScore {
    let (r, h) = (match_tokens(reference), match_tokens(candidate));
    if h.is_empty() {
        return SimilarityScore::new(Metric::Bleu, if r.is_empty() { 1.0 } else { 0.0 });
    }
    let log_precision: f64 = (1..=BLEU_ORDER)
        .map(|n| {
            let (m, t, _) = ngram_overlap(&h, &r, n);
            ((m + 1) as f64 / (t + 1) as f64).ln()
        })
        .sum::<f64>()
        / BLEU_ORDER as f64;
    let (c, rl) = (h.len() as f64, r.len() as f64);
    let brevity = if c >= rl { 1.0 } else { (1.0 - rl / c).exp() };
    SimilarityScore::new(Metric::Bleu, brevity * log_precision.exp())
}

pub fn exact_match(reference: &str, candidate: &str) -> SimilarityScore {
    let same = normalize_for_match(reference) == normalize_for_match(candidate);
    SimilarityScore::new(Metric::ExactMatch, if same { 1.0 } else { 0.0 })
}

/// Edit distance with unit insert, delete and substitute costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn error_rate<T: PartialEq>(reference: &[T], hyp: &[T]) -> f64 {
    if reference.is_empty() {
        return if hyp.is_empty() { 0.0 } else { 1.0 };
    }
    levenshtein(reference, hyp) as f64 / reference.len() as f64
}

/// `max(0, 1 - CER)` over characters of the normalized texts.
pub fn cer_similarity(reference: &str, candidate: &str) -> SimilarityScore {
    let r: Vec<char> = normalize_for_match(reference).chars().collect();
    let h: Vec<char> = normalize_for_match(candidate).chars().collect();
    SimilarityScore::new(Metric::CerSim, (1.0 - error_rate(&r, &h)).max(0.0))
}

/// `max(0, 1 - WER)` over normalized tokens.
pub fn wer_similarity(reference: &str, candidate: &str) -> SimilarityScore {
    let (r, h) = (match_tokens(reference), match_tokens(candidate));
    SimilarityScore::new(Metric::WerSim, (1.0 - error_rate(&r, &h)).max(0.0))
}

/// All six surface metrics.
pub fn lexical_metrics(reference: &str, candidate: &str) -> BTreeMap<Metric, SimilarityScore> {
    [
        chrf(reference, candidate),
        token_f1(reference, candidate),
        bleu(reference, candidate),
        exact_match(reference, candidate),
        cer_similarity(reference, candidate),
        wer_similarity(reference, candidate),
    ]
    .into_iter()
    .map(|s| (s.metric, s))
    .collect()
}
