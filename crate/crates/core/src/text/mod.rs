//! Tokenisation, sentence segmentation and syllable counting shared by the
//! retrievers, the generator and the evaluator.
//!
//! Content tokens: lowercase, split on anything that is not alphanumeric.
//! Words containing an apostrophe are split on it and one-character
//! fragments are dropped ("Queen's" gives "queen"). Stopwords are removed.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

const STOPWORDS_TXT: &str = include_str!("stopwords.txt");

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "etc", "inc", "ltd", "co", "mt", "no", "vol", "approx",
    "e.g", "i.e", "u.s", "u.k",
];

/// The shipped English stopword list.
pub fn stopwords() -> &'static BTreeSet<String> {
    static SET: OnceLock<BTreeSet<String>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_TXT.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

/// sha256 of the stopword file, recorded in every metric report.
pub fn stopwords_sha256() -> String {
    hex::encode(Sha256::digest(STOPWORDS_TXT.as_bytes()))
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Maximal runs of alphanumerics and apostrophes, with leading/trailing
/// apostrophes trimmed. Case is preserved.
pub fn words(text: &str) -> Vec<&str> {
    text.split(|c: char| !(c.is_alphanumeric() || is_apostrophe(c)))
        .map(|w| w.trim_matches(is_apostrophe))
        .filter(|w| !w.is_empty())
        .collect()
}

/// Lowercased tokens before stopword removal, with the apostrophe rule applied.
pub fn raw_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in words(text) {
        let lower = word.to_lowercase();
        if lower.contains(is_apostrophe) {
            out.extend(lower.split(is_apostrophe).filter(|f| f.chars().count() > 1).map(str::to_string));
        } else {
            out.push(lower);
        }
    }
    out
}

/// Content-token multiset in text order.
pub fn content_tokens(text: &str) -> Vec<String> {
    let stop = stopwords();
    raw_tokens(text).into_iter().filter(|t| !stop.contains(t)).collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    content_tokens(text).into_iter().collect()
}

/// Splits text into sentences. A sentence ends at a line break, or at `.`,
/// `!` or `?` (plus closing quotes/brackets) followed by whitespace and an
/// uppercase letter, digit or opening quote. A period after a known
/// abbreviation or a single-letter initial does not end a sentence.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let chars: Vec<char> = line.chars().collect();
        let mut start = 0;
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if matches!(c, '.' | '!' | '?') {
                let mut end = i + 1;
                while end < chars.len()
                    && matches!(chars[end], '.' | '!' | '?' | '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
                {
                    end += 1;
                }
                let mut next = end;
                while next < chars.len() && chars[next].is_whitespace() {
                    next += 1;
                }
                let boundary = next > end
                    && next < chars.len()
                    && (chars[next].is_uppercase()
                        || chars[next].is_ascii_digit()
                        || matches!(chars[next], '"' | '\'' | '\u{201c}' | '\u{2018}'))
                    && !(c == '.' && is_abbreviation(&chars[start..i]));
                if boundary {
                    push_trimmed(&mut out, &chars[start..end]);
                    start = next;
                    i = next;
                    continue;
                }
                i = end;
                continue;
            }
            i += 1;
        }
        push_trimmed(&mut out, &chars[start..]);
    }
    out
}

fn push_trimmed(out: &mut Vec<String>, chars: &[char]) {
    let s: String = chars.iter().collect();
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

fn is_abbreviation(before: &[char]) -> bool {
    let word: String = before
        .iter()
        .rev()
        .take_while(|c| c.is_alphanumeric() || **c == '.')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let lower = word.to_lowercase();
    (word.chars().count() == 1 && word.chars().all(char::is_alphabetic)) || ABBREVIATIONS.contains(&lower.as_str())
}

/// Syllables by vowel groups (a, e, i, o, u, y); a terminal silent `e` is
/// subtracted unless the word ends in consonant + "le"; at least one per word.
pub fn syllables(word: &str) -> usize {
    let letters: Vec<char> = word.to_lowercase().chars().filter(|c| c.is_alphabetic()).collect();
    let is_vowel = |c: char| "aeiouy".contains(c);
    let mut groups: usize = 0;
    let mut prev_vowel = false;
    for &c in &letters {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = letters.len();
    if n >= 1 && letters[n - 1] == 'e' {
        let consonant_le = n >= 3 && letters[n - 2] == 'l' && !is_vowel(letters[n - 3]);
        if !consonant_le {
            groups = groups.saturating_sub(1);
        }
    }
    groups.max(1)
}

/// Splits camelCase / PascalCase identifiers: "RogerTaylor" → "Roger Taylor",
/// "startDate" → "start Date", "QueenSetItem3" → "Queen Set Item 3".
pub fn split_camel(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len() + 4);
    for (i, &c) in chars.iter().enumerate() {
        if i > 0 {
            let p = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            let boundary = (c.is_uppercase() && (p.is_lowercase() || p.is_ascii_digit()))
                || (c.is_uppercase() && p.is_uppercase() && next_lower)
                || (c.is_ascii_digit() && p.is_lowercase())
                || (c.is_alphabetic() && p.is_ascii_digit());
            if boundary && p != ' ' && c != ' ' {
                out.push(' ');
            }
        }
        out.push(c);
    }
    out.replace('_', " ")
}

/// Whether `needle`'s lowercase raw tokens occur contiguously in `haystack`'s.
pub fn contains_phrase(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Number of occurrences of `needle` as a contiguous token run.
pub fn count_phrase(haystack: &[String], needle: &[String]) -> usize {
    if needle.is_empty() {
        return 0;
    }
    haystack.windows(needle.len()).filter(|w| *w == needle).count()
}
