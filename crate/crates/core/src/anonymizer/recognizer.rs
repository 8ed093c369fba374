//! Pluggable recognizers for PERSON, ADDRESS and MONEY entities.

use once_cell::sync::Lazy;
use regex::Regex;

use super::patterns::Match;
use super::EntityKind;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecognizerError {
    #[error("recognizer backend unavailable: {0}")]
    Unavailable(String),
    #[error("recognizer failed: {0}")]
    Failed(String),
}

/// Entity recognizer backend.
///
/// Implementations may keep internal state, so a recognizer instance
/// belongs to one worker; batch code creates one per worker through a
/// [`RecognizerFactory`].
pub trait Recognizer: Send {
    fn name(&self) -> &str;

    /// Returns PERSON / ADDRESS / MONEY candidates as byte ranges of `text`.
    fn recognize(&mut self, text: &str) -> Result<Vec<Match>, RecognizerError>;
}

pub type RecognizerFactory = std::sync::Arc<dyn Fn() -> Box<dyn Recognizer> + Send + Sync>;

pub fn default_factory() -> RecognizerFactory {
    std::sync::Arc::new(|| Box::new(HeuristicRecognizer::default()))
}

static HONORIFIC_NAME: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"\b(?:Mr|Mrs|Ms|Miss|Dr|Shri|Shree|Smt|Sri|Kumari|Sh)\.?\s+[A-Z][a-z]+(?:\s+[A-Z][a-z]+){0,2}")
        .expect("honorific regex")
});

static NAME_CUE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)\b(?:my name is|mera naam|mera name|naam hai|name is)\s+")
        .expect("name cue regex")
});

static NAME_WORD: Lazy<Regex> = Lazy::new(|| Regex::new(r"^[A-Za-z]+").expect("name word regex"));

const NAME_STOP: &[&str] = &[
    "hai", "h", "hu", "hun", "hoon", "is", "and", "aur", "mai", "main", "mein", "me", "se", "ka",
    "ki", "ke", "ko", "hy", "he", "from", "or", "but", "sir", "madam", "ji",
];

static ADDRESS: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"\b(?:(?i:house|h|flat|plot|shop)\s?(?i:no|number)\.?\s*[\w/\-]+,?\s*)?(?:[A-Z0-9][\w/\-]*,?\s+){0,3}(?i:road|rd|nagar|colony|sector|street|marg|gali|mohalla|vihar|enclave|chowk|bazar|bazaar|lane|society|apartments?|layout|puram|ganj|tehsil|district|dist)\b\.?(?:,?\s*(?:[A-Z][a-z]+|\d{6}))*",
    )
    .expect("address regex")
});

static PIN_CODE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)\b(?:pin|pincode|pin code)\s*[:\-]?\s*\d{6}\b").expect("pin regex")
});

// Pattern fallback for currency mentions, which generic recognizers miss
// in code-mixed text.
static MONEY: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"(?i)(?:(?:\brs\.?|\binr|₹)\s?\d[\d,]*(?:\.\d+)?(?:\s?(?:lakh|lakhs|lac|crore|k)\b)?|\b\d[\d,]*(?:\.\d+)?\s?(?:rupees|rupaye|rupaiye|rupay|rs|inr|lakh|lakhs|lac|crore)\b\.?)",
    )
    .expect("money regex")
});

/// Rule- and cue-based recognizer used when no statistical NER backend is
/// configured.
#[derive(Debug, Default, Clone)]
pub struct HeuristicRecognizer;

fn push(out: &mut Vec<Match>, start: usize, end: usize, kind: EntityKind) {
    if end > start {
        out.push(Match { start, end, kind });
    }
}

impl HeuristicRecognizer {
    fn names(text: &str, out: &mut Vec<Match>) {
        for m in HONORIFIC_NAME.find_iter(text) {
            push(out, m.start(), m.end(), EntityKind::Person);
        }
        for cue in NAME_CUE.find_iter(text) {
            let mut pos = cue.end();
            let mut end = pos;
            for _ in 0..3 {
                let rest = &text[pos..];
                let Some(w) = NAME_WORD.find(rest) else { break };
                let word = w.as_str();
                if NAME_STOP.contains(&word.to_lowercase().as_str()) {
                    break;
                }
                end = pos + w.end();
                let after = &text[end..];
                let spaces = after.len() - after.trim_start_matches(' ').len();
                if spaces == 0 {
                    break;
                }
                pos = end + spaces;
            }
            push(out, cue.end(), end, EntityKind::Person);
        }
    }
}

impl Recognizer for HeuristicRecognizer {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn recognize(&mut self, text: &str) -> Result<Vec<Match>, RecognizerError> {
        let mut out = Vec::new();
        Self::names(text, &mut out);
        for m in ADDRESS.find_iter(text) {
            let end = m.start() + m.as_str().trim_end_matches([',', ' ']).len();
            push(&mut out, m.start(), end, EntityKind::Address);
        }
        for m in PIN_CODE.find_iter(text) {
            push(&mut out, m.start(), m.end(), EntityKind::Address);
        }
        Ok(out)
    }
}

/// Currency pattern fallback; always applied after the recognizer.
pub fn find_money(text: &str) -> Vec<Match> {
    MONEY
        .find_iter(text)
        .map(|m| Match {
            start: m.start(),
            end: m.end(),
            kind: EntityKind::Money,
        })
        .collect()
}

/// A recognizer whose backend is down. Useful to exercise degraded mode.
#[derive(Debug, Default, Clone)]
pub struct UnavailableRecognizer;

impl Recognizer for UnavailableRecognizer {
    fn name(&self) -> &str {
        "unavailable"
    }

    fn recognize(&mut self, _text: &str) -> Result<Vec<Match>, RecognizerError> {
        Err(RecognizerError::Unavailable("no backend".into()))
    }
}
