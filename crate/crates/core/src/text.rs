//! Unicode helpers shared by every stage.
//!
//! All input text is brought to NFC before it is compared, tokenized or
//! used as a fixture key. Bangla vowel signs and the nukta have several
//! encodings and equality breaks without this.

use unicode_normalization::UnicodeNormalization;

/// Bangla danda, used as a sentence terminator.
pub const DANDA: char = '\u{0964}';
/// Bangla double danda.
pub const DOUBLE_DANDA: char = '\u{0965}';

pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

/// Maps a Bangla digit (U+09E6..=U+09EF) to its ASCII counterpart.
pub fn ascii_digit(c: char) -> Option<char> {
    match c {
        '\u{09E6}'..='\u{09EF}' => char::from_digit(c as u32 - 0x09E6, 10),
        '0'..='9' => Some(c),
        _ => None,
    }
}

/// Replaces Bangla digits with ASCII digits, leaving everything else alone.
pub fn ascii_digits(text: &str) -> String {
    text.chars().map(|c| ascii_digit(c).unwrap_or(c)).collect()
}

pub fn is_quote(c: char) -> bool {
    matches!(
        c,
        '"' | '\'' | '`' | '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{00AB}' | '\u{00BB}'
    )
}

/// Collapses every run of whitespace into a single ASCII space and trims the ends.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Punctuation as understood by the surface-level metrics: Unicode
/// punctuation classes approximated by ASCII punctuation, quotes, and the
/// Bangla dandas.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || is_quote(c)
        || matches!(
            c,
            DANDA | DOUBLE_DANDA | '\u{2013}' | '\u{2014}' | '\u{2026}' | '\u{00A1}' | '\u{00BF}'
        )
}

/// NFC, punctuation removed, lowercased, whitespace collapsed.
pub fn normalize_for_match(text: &str) -> String {
    let stripped: String = nfc(text)
        .chars()
        .map(|c| if is_punctuation(c) { ' ' } else { c })
        .collect();
    collapse_whitespace(&stripped.to_lowercase())
}

/// Whitespace tokens of [`normalize_for_match`].
pub fn match_tokens(text: &str) -> Vec<String> {
    normalize_for_match(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bangla_digits_map_to_ascii() {
        assert_eq!(ascii_digits("১.০"), "1.0");
        assert_eq!(ascii_digits("১৫০০০০"), "150000");
        assert_eq!(ascii_digits("abc 7"), "abc 7");
    }

    #[test]
    fn nfc_composes_bangla_vowel_signs() {
        // ো decomposes to ে + া
        let decomposed = "\u{0995}\u{09C7}\u{09BE}";
        assert_eq!(nfc(decomposed), "\u{0995}\u{09CB}");
    }

    #[test]
    fn match_tokens_drop_danda_and_punctuation() {
        assert_eq!(match_tokens("ঢাকা, নদী।"), vec!["ঢাকা", "নদী"]);
        assert!(match_tokens(" ।। ").is_empty());
    }
}
