use crate::text::{ascii_digit, collapse_whitespace, is_quote, nfc, DANDA, DOUBLE_DANDA};

use super::PromptError;

/// Characters stripped from both ends of each extracted candidate, in
/// addition to whitespace.
pub const CANDIDATE_TRIM_CHARS: &[char] = &[
    DANDA, ',', ';', '"', '\'', '\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}', '(', ')',
];

fn trim_candidate(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || CANDIDATE_TRIM_CHARS.contains(&c))
}

/// Splits a comma/newline separated entity list into unique candidates,
/// keeping first occurrences in order.
pub fn parse_ner_output(raw: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for item in raw.split([',', '\n']) {
        let item = nfc(trim_candidate(item));
        if !item.is_empty() && !out.contains(&item) {
            out.push(item);
        }
    }
    out
}

fn is_terminal_punctuation(c: char) -> bool {
    matches!(c, DANDA | DOUBLE_DANDA | '.' | '?' | '!' | ',' | ';' | ':' | '\u{2026}')
}

/// Normalizes a QA reply to the bare answer span.
pub fn parse_short_answer(raw: &str) -> Result<String, PromptError> {
    let s = nfc(raw);
    let s = s
        .trim_start_matches(|c: char| c.is_whitespace() || is_quote(c))
        .trim_end_matches(|c: char| c.is_whitespace() || is_quote(c) || is_terminal_punctuation(c));
    let s = collapse_whitespace(s);
    if s.is_empty() {
        Err(PromptError::EmptyAnswer)
    } else {
        Ok(s)
    }
}

/// Normalizes a generated question: surrounding quotes and whitespace go,
/// the question mark stays.
pub fn parse_question(raw: &str) -> Result<String, PromptError> {
    let s = nfc(raw);
    let s = collapse_whitespace(s.trim_matches(|c: char| c.is_whitespace() || is_quote(c)));
    if s.is_empty() {
        Err(PromptError::EmptyQuestion)
    } else {
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParse {
    pub value: f64,
    /// False when no number was found and `value` is the fallback.
    pub parsed: bool,
}

/// First decimal number in `raw`, Bangla digits included. A leading minus
/// counts only at the start of the text or after whitespace.
fn first_number(raw: &str) -> Option<f64> {
    let chars: Vec<char> = raw.chars().map(|c| ascii_digit(c).unwrap_or(c)).collect();
    let n = chars.len();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        let starts_fraction = c == '.' && i + 1 < n && chars[i + 1].is_ascii_digit();
        if c.is_ascii_digit() || starts_fraction {
            let negative = i > 0 && chars[i - 1] == '-' && (i == 1 || chars[i - 2].is_whitespace());
            let mut j = i;
            while j < n && chars[j].is_ascii_digit() {
                j += 1;
            }
            if j + 1 < n && chars[j] == '.' && chars[j + 1].is_ascii_digit() {
                j += 1;
                while j < n && chars[j].is_ascii_digit() {
                    j += 1;
                }
            }
            let literal: String = chars[i..j].iter().collect();
            let literal = if literal.starts_with('.') { format!("0{literal}") } else { literal };
            let v: f64 = literal.parse().ok()?;
            return Some(if negative { -v } else { v });
        }
        i += 1;
    }
    None
}

/// Reads an importance weight, clamped to [0, 1]; `fallback` when the reply
/// holds no number.
pub fn parse_weight_output(raw: &str, fallback: f64) -> WeightParse {
    match first_number(raw) {
        Some(v) => WeightParse { value: v.clamp(0.0, 1.0), parsed: true },
        None => WeightParse { value: fallback.clamp(0.0, 1.0), parsed: false },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ner_list_is_deduplicated() {
        assert_eq!(parse_ner_output("ঢাকা, নদী, ঢাকা"), vec!["ঢাকা", "নদী"]);
    }

    #[test]
    fn ner_empty_output() {
        assert!(parse_ner_output("").is_empty());
        assert!(parse_ner_output(" ,\n, ।").is_empty());
    }

    #[test]
    fn ner_items_are_trimmed() {
        assert_eq!(parse_ner_output(" ঢাকা ,\n নদী। "), vec!["ঢাকা", "নদী"]);
        assert_eq!(parse_ner_output("\"ডেঙ্গু\"; (প্লাটিলেট)"), vec!["ডেঙ্গু\"; (প্লাটিলেট"]);
        assert_eq!(parse_ner_output("“ডেঙ্গু”\n(প্লাটিলেট);"), vec!["ডেঙ্গু", "প্লাটিলেট"]);
    }

    #[test]
    fn ner_dedupes_after_normalization() {
        let composed = "\u{0995}\u{09CB}";
        let decomposed = "\u{0995}\u{09C7}\u{09BE}";
        assert_eq!(parse_ner_output(&format!("{composed}, {decomposed}")), vec![composed]);
    }

    #[test]
    fn short_answer_trimming() {
        assert_eq!(parse_short_answer("  ঢাকা। ").unwrap(), "ঢাকা");
        assert_eq!(parse_short_answer("\"১৫০০০০\"").unwrap(), "১৫০০০০");
        assert_eq!(parse_short_answer("ডেঙ্গু   জ্বর.").unwrap(), "ডেঙ্গু জ্বর");
        assert_eq!(parse_short_answer("   "), Err(PromptError::EmptyAnswer));
        assert_eq!(parse_short_answer("\"।\""), Err(PromptError::EmptyAnswer));
    }

    #[test]
    fn question_keeps_its_mark() {
        assert_eq!(parse_question(" \"ডেঙ্গু কী?\"\n").unwrap(), "ডেঙ্গু কী?");
        assert_eq!(parse_question(" \n "), Err(PromptError::EmptyQuestion));
    }

    #[test]
    fn weight_parses_ascii_and_bangla_digits() {
        assert_eq!(parse_weight_output("0.8", 0.5), WeightParse { value: 0.8, parsed: true });
        assert_eq!(parse_weight_output("১.০", 0.5), WeightParse { value: 1.0, parsed: true });
        assert_eq!(parse_weight_output("স্কোর: ০.৭৫", 0.5).value, 0.75);
        assert_eq!(parse_weight_output(".5", 0.5).value, 0.5);
        assert_eq!(parse_weight_output("1", 0.5).value, 1.0);
    }

    #[test]
    fn weight_is_clamped() {
        assert_eq!(parse_weight_output("1.5", 0.5).value, 1.0);
        assert_eq!(parse_weight_output("-0.3", 0.5).value, 0.0);
        // a dash joined to a word is not a sign
        assert_eq!(parse_weight_output("স্কোর-0.3", 0.5).value, 0.3);
    }

    #[test]
    fn weight_falls_back_without_a_number() {
        assert_eq!(parse_weight_output("খুব গুরুত্বপূর্ণ", 0.5), WeightParse { value: 0.5, parsed: false });
        assert!(!parse_weight_output("", 0.5).parsed);
        assert!(!parse_weight_output(".", 0.5).parsed);
    }

    proptest! {
        #[test]
        fn ner_parse_is_idempotent(raw in "[ক-হ ,\n।;\"()a-z]{0,40}") {
            let once = parse_ner_output(&raw);
            let again = parse_ner_output(&once.join(", "));
            prop_assert_eq!(again, once);
        }

        #[test]
        fn weight_is_always_in_unit_interval(raw in "\\PC{0,20}", fallback in 0.0f64..=1.0) {
            let w = parse_weight_output(&raw, fallback).value;
            prop_assert!((0.0..=1.0).contains(&w));
        }
    }
}
