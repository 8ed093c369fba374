//! Regex detectors for the pattern-kind entities.

use once_cell::sync::Lazy;
use regex::Regex;

use super::EntityKind;

static EMAIL: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"[A-Za-z0-9][A-Za-z0-9._%+\-]*@[A-Za-z0-9](?:[A-Za-z0-9\-]*[A-Za-z0-9])?(?:\.[A-Za-z0-9](?:[A-Za-z0-9\-]*[A-Za-z0-9])?)*\.[A-Za-z]{2,}")
        .expect("email regex")
});

const TLDS: &str = "com|in|org|net|co|io|gov|edu|info|biz|xyz|app|online|site|me|us|uk|ly|live|shop|store|club|top|tk|ai|dev|tech|link|page|cc|pw|ru|cn";

static WEBSITE: Lazy<Regex> = Lazy::new(|| {
    let pattern = format!(
        r"(?i)(?:https?://[^\s<>]+|www\.[^\s<>]+|(?:[a-z0-9](?:[a-z0-9\-]*[a-z0-9])?\.)+(?:{TLDS})\b(?:\.[a-z]{{2}})?(?::\d+)?(?:/[^\s<>]*)?)"
    );
    Regex::new(&pattern).expect("website regex")
});

// 10 digits with single optional space/hyphen separators, optionally
// preceded by +91 or a trunk 0.
static PHONE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?:\+91[\s\-]?|\b0)?\d(?:[ \-]?\d){9}").expect("phone regex"));

static PLACEHOLDER: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"<(?:PERSON|PHONE|EMAIL|ADDRESS|WEBSITE|MONEY)>").expect("placeholder regex")
});

/// Matches an existing placeholder token.
pub fn placeholder_regex() -> &'static Regex {
    &PLACEHOLDER
}

/// A candidate entity match in byte offsets of the scanned text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub start: usize,
    pub end: usize,
    pub kind: EntityKind,
}

fn prev_char(text: &str, at: usize) -> Option<char> {
    text[..at].chars().next_back()
}

fn next_char(text: &str, at: usize) -> Option<char> {
    text[at..].chars().next()
}

fn trim_trailing_punct(text: &str, start: usize, mut end: usize) -> usize {
    while end > start {
        match prev_char(text, end) {
            Some(c) if ".,;:!?)]}'\"".contains(c) => end -= c.len_utf8(),
            _ => break,
        }
    }
    end
}

pub fn find_emails(text: &str) -> Vec<Match> {
    EMAIL
        .find_iter(text)
        .filter(|m| !matches!(prev_char(text, m.start()), Some(c) if c.is_alphanumeric()))
        .map(|m| Match {
            start: m.start(),
            end: m.end(),
            kind: EntityKind::Email,
        })
        .collect()
}

pub fn find_websites(text: &str) -> Vec<Match> {
    WEBSITE
        .find_iter(text)
        .filter_map(|m| {
            if matches!(prev_char(text, m.start()), Some(c) if c.is_alphanumeric() || c == '@' || c == '.')
            {
                return None;
            }
            let end = trim_trailing_punct(text, m.start(), m.end());
            // a bare domain must not run into more word characters
            if matches!(next_char(text, end), Some(c) if c.is_alphanumeric() || c == '@') {
                return None;
            }
            (end > m.start()).then_some(Match {
                start: m.start(),
                end,
                kind: EntityKind::Website,
            })
        })
        .collect()
}

pub fn find_phones(text: &str) -> Vec<Match> {
    PHONE
        .find_iter(text)
        .filter(|m| {
            let before_ok = !matches!(prev_char(text, m.start()), Some(c) if c.is_ascii_digit() || c.is_alphabetic());
            let after_ok = !matches!(next_char(text, m.end()), Some(c) if c.is_ascii_digit() || c.is_alphabetic());
            before_ok && after_ok
        })
        .map(|m| Match {
            start: m.start(),
            end: m.end(),
            kind: EntityKind::Phone,
        })
        .collect()
}
