//! Stopword removal and lemmatization for code-mixed text.

use std::collections::HashSet;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::patterns::placeholder_regex;

/// English function words.
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "i",
    "me",
    "my",
    "myself",
    "we",
    "our",
    "ours",
    "ourselves",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
    "he",
    "him",
    "his",
    "himself",
    "she",
    "her",
    "hers",
    "herself",
    "it",
    "its",
    "itself",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "what",
    "which",
    "who",
    "whom",
    "this",
    "that",
    "these",
    "those",
    "am",
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "have",
    "has",
    "had",
    "having",
    "do",
    "does",
    "did",
    "doing",
    "a",
    "an",
    "the",
    "and",
    "but",
    "if",
    "or",
    "because",
    "as",
    "until",
    "while",
    "of",
    "at",
    "by",
    "for",
    "with",
    "about",
    "against",
    "between",
    "into",
    "through",
    "during",
    "before",
    "after",
    "above",
    "below",
    "to",
    "from",
    "up",
    "down",
    "in",
    "out",
    "on",
    "off",
    "over",
    "under",
    "again",
    "further",
    "then",
    "once",
    "here",
    "there",
    "when",
    "where",
    "why",
    "how",
    "all",
    "any",
    "both",
    "each",
    "few",
    "more",
    "most",
    "other",
    "some",
    "such",
    "no",
    "nor",
    "not",
    "only",
    "own",
    "same",
    "so",
    "than",
    "too",
    "very",
    "s",
    "t",
    "can",
    "will",
    "just",
    "don",
    "should",
    "now",
    "d",
    "ll",
    "m",
    "o",
    "re",
    "ve",
    "y",
    "ain",
    "aren",
    "couldn",
    "didn",
    "doesn",
    "hadn",
    "hasn",
    "haven",
    "isn",
    "ma",
    "mightn",
    "mustn",
    "needn",
    "shan",
    "shouldn",
    "wasn",
    "weren",
    "won",
    "wouldn",
];

/// Romanized Hindi function words common in code-mixed complaints.
pub const HINGLISH_STOPWORDS: &[&str] = &[
    "hai", "hain", "ho", "hota", "hoti", "hote", "tha", "thi", "the", "se", "ka", "ki", "ke", "ko",
    "me", "mein", "main", "mai", "mujhe", "mujhse", "mera", "meri", "mere", "hum", "hame",
    "hamara", "hamari", "humne", "maine", "aap", "aapka", "aapki", "aapke", "tum", "tera", "teri",
    "aur", "ya", "par", "pe", "bhi", "to", "toh", "ne", "hi", "kya", "ye", "yeh", "wo", "woh",
    "vo", "is", "us", "iss", "uss", "ek", "kuch", "koi", "jo", "jab", "tab", "phir", "fir",
    "lekin", "magar", "ki", "liye", "wala", "wali", "wale", "apna", "apni", "apne", "unka", "unki",
    "unke", "uska", "uski", "uske", "inka", "h", "hu", "hun", "hoon", "ab", "bhai", "ji", "sir",
    "please", "plz", "pls",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown stopword list {0:?} (known: english, hinglish, english+hinglish, none)")]
pub struct UnknownStopwordList(pub String);

/// Resolve a named stopword list.
pub fn stopword_list(id: &str) -> Result<HashSet<&'static str>, UnknownStopwordList> {
    let lists: Vec<&[&str]> = match id {
        "english" => vec![ENGLISH_STOPWORDS],
        "hinglish" => vec![HINGLISH_STOPWORDS],
        "english+hinglish" => vec![ENGLISH_STOPWORDS, HINGLISH_STOPWORDS],
        "none" => vec![],
        other => return Err(UnknownStopwordList(other.to_string())),
    };
    Ok(lists.into_iter().flatten().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub remove_stopwords: bool,
    pub lemmatize: bool,
    pub stopword_list_id: String,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            remove_stopwords: true,
            lemmatize: true,
            stopword_list_id: "english+hinglish".into(),
        }
    }
}

static TOKEN: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"<[A-Z]+>|[\p{L}\p{M}\p{N}]+(?:['’][\p{L}]+)?").expect("token regex"));

/// Split text into placeholder tokens and word tokens; punctuation is
/// dropped.
pub fn tokenize(text: &str) -> Vec<&str> {
    TOKEN.find_iter(text).map(|m| m.as_str()).collect()
}

/// Lower-case words, drop stopwords and reduce the rest to base form.
/// Placeholder tokens pass through untouched and token order is kept.
pub fn normalize(text: &str, config: &NormalizationConfig) -> Result<String, UnknownStopwordList> {
    let stopwords = if config.remove_stopwords {
        stopword_list(&config.stopword_list_id)?
    } else {
        // still validate the id so misconfiguration surfaces early
        stopword_list(&config.stopword_list_id)?;
        HashSet::new()
    };
    let placeholder = placeholder_regex();
    let mut out: Vec<String> = Vec::new();
    for token in tokenize(text) {
        if placeholder
            .find(token)
            .is_some_and(|m| m.len() == token.len())
        {
            out.push(token.to_string());
            continue;
        }
        let lower = token.to_lowercase();
        if stopwords.contains(lower.as_str()) {
            continue;
        }
        out.push(if config.lemmatize {
            lemmatize(&lower)
        } else {
            lower
        });
    }
    Ok(out.join(" "))
}

const IRREGULAR: &[(&str, &str)] = &[
    ("was", "be"),
    ("were", "be"),
    ("is", "be"),
    ("am", "be"),
    ("are", "be"),
    ("been", "be"),
    ("being", "be"),
    ("has", "have"),
    ("had", "have"),
    ("having", "have"),
    ("did", "do"),
    ("done", "do"),
    ("does", "do"),
    ("went", "go"),
    ("gone", "go"),
    ("took", "take"),
    ("taken", "take"),
    ("got", "get"),
    ("gotten", "get"),
    ("made", "make"),
    ("making", "make"),
    ("said", "say"),
    ("sent", "send"),
    ("paid", "pay"),
    ("lost", "lose"),
    ("stole", "steal"),
    ("stolen", "steal"),
    ("gave", "give"),
    ("given", "give"),
    ("told", "tell"),
    ("bought", "buy"),
    ("sold", "sell"),
    ("left", "leave"),
    ("came", "come"),
    ("saw", "see"),
    ("seen", "see"),
    ("knew", "know"),
    ("known", "know"),
    ("found", "find"),
    ("thought", "think"),
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("used", "use"),
    ("using", "use"),
    ("caused", "cause"),
    ("causing", "cause"),
    ("threatened", "threaten"),
    ("threatening", "threaten"),
    ("wrote", "write"),
    ("written", "write"),
    ("spoke", "speak"),
    ("spoken", "speak"),
    ("began", "begin"),
    ("begun", "begin"),
    ("brought", "bring"),
    ("caught", "catch"),
    ("kept", "keep"),
    ("meant", "mean"),
    ("met", "meet"),
    ("ran", "run"),
    ("shown", "show"),
    ("stuck", "stick"),
    ("won", "win"),
    ("hid", "hide"),
    ("hidden", "hide"),
    ("blackmailed", "blackmail"),
    ("emailed", "email"),
    ("happened", "happen"),
    ("opened", "open"),
    ("offered", "offer"),
    ("entered", "enter"),
    ("transferred", "transfer"),
    ("referred", "refer"),
    ("occurred", "occur"),
    ("debited", "debit"),
    ("credited", "credit"),
    ("visited", "visit"),
    ("deposited", "deposit"),
    ("posted", "post"),
    ("edited", "edit"),
    ("limited", "limit"),
];

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

/// Consonant-vowel-consonant ending where the final consonant is not w/x/y.
fn ends_cvc(s: &[u8]) -> bool {
    let n = s.len();
    n >= 3
        && !is_vowel(s[n - 3])
        && is_vowel(s[n - 2])
        && !is_vowel(s[n - 1])
        && !matches!(s[n - 1], b'w' | b'x' | b'y')
}

/// Number of vowel-consonant sequences (the Porter "measure").
fn measure(s: &[u8]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for &c in s {
        let v = is_vowel(c) || (c == b'y' && !prev_vowel);
        if prev_vowel && !v {
            m += 1;
        }
        prev_vowel = v;
    }
    m
}

fn restore_verb_stem(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 2
        && b[n - 1] == b[n - 2]
        && !is_vowel(b[n - 1])
        && !matches!(b[n - 1], b'l' | b's' | b'z')
    {
        return stem[..n - 1].to_string();
    }
    if stem.ends_with("at") || stem.ends_with("bl") || stem.ends_with("iz") || stem.ends_with('v') {
        return format!("{stem}e");
    }
    if measure(b) == 1 && ends_cvc(b) {
        return format!("{stem}e");
    }
    stem.to_string()
}

/// Rule-based English lemmatizer. Words that do not look like inflected
/// English (including most romanized Hindi) pass through unchanged.
pub fn lemmatize(word: &str) -> String {
    if let Some((_, lemma)) = IRREGULAR.iter().find(|(w, _)| *w == word) {
        return lemma.to_string();
    }
    if !word.is_ascii() || word.len() < 4 || word.bytes().any(|b| !b.is_ascii_lowercase()) {
        return word.to_string();
    }
    let n = word.len();
    if let Some(stem) = word.strip_suffix("ing") {
        if n >= 6 && stem.bytes().any(is_vowel) {
            return restore_verb_stem(stem);
        }
        return word.to_string();
    }
    if let Some(stem) = word.strip_suffix("ied") {
        if n >= 5 {
            return format!("{stem}y");
        }
    }
    if word.ends_with("eed") {
        return word[..n - 1].to_string();
    }
    if let Some(stem) = word.strip_suffix("ed") {
        if n >= 5 && stem.bytes().any(is_vowel) {
            return restore_verb_stem(stem);
        }
        return word.to_string();
    }
    if let Some(stem) = word.strip_suffix("ies") {
        if n >= 5 {
            return format!("{stem}y");
        }
    }
    for suffix in ["sses", "shes", "ches", "xes", "zzes"] {
        if word.ends_with(suffix) {
            return word[..n - 2].to_string();
        }
    }
    if word.ends_with('s') && !["ss", "us", "is", "as"].iter().any(|s| word.ends_with(s)) {
        return word[..n - 1].to_string();
    }
    word.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(list: &str) -> NormalizationConfig {
        NormalizationConfig {
            stopword_list_id: list.into(),
            ..Default::default()
        }
    }

    #[test]
    fn english_sentence() {
        assert_eq!(
            normalize("the accounts were hacked", &cfg("english")).unwrap(),
            "account hack"
        );
    }

    #[test]
    fn placeholders_survive() {
        assert_eq!(
            normalize("<EMAIL> se message aaya", &cfg("english+hinglish")).unwrap(),
            "<EMAIL> message aaya"
        );
        assert_eq!(
            normalize("<PHONE>, <MONEY>!", &cfg("english")).unwrap(),
            "<PHONE> <MONEY>"
        );
    }

    #[test]
    fn everything_removed_gives_empty() {
        assert_eq!(normalize("the was and", &cfg("english")).unwrap(), "");
        assert_eq!(normalize("", &cfg("english")).unwrap(), "");
    }

    #[test]
    fn unknown_list_is_error() {
        assert!(normalize("x", &cfg("klingon")).is_err());
        let off = NormalizationConfig {
            remove_stopwords: false,
            ..cfg("klingon")
        };
        assert!(normalize("x", &off).is_err());
    }

    #[test]
    fn lemma_rules() {
        for (w, l) in [
            ("accounts", "account"),
            ("hacked", "hack"),
            ("stopped", "stop"),
            ("called", "call"),
            ("received", "receive"),
            ("shared", "share"),
            ("opened", "open"),
            ("companies", "company"),
            ("applied", "apply"),
            ("agreed", "agree"),
            ("messages", "message"),
            ("hacking", "hack"),
            ("sending", "send"),
            ("boxes", "box"),
            ("days", "day"),
            ("were", "be"),
            ("created", "create"),
        ] {
            assert_eq!(lemmatize(w), l, "{w}");
        }
    }

    #[test]
    fn hinglish_passes_through() {
        for w in [
            "paas", "bas", "aaya", "paise", "kisi", "bahut", "vishwas", "rupaye",
        ] {
            assert_eq!(lemmatize(w), w);
        }
    }
}
