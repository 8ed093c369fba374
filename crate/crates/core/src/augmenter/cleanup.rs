//! Splitting raw generator completions into candidate sentences.

use once_cell::sync::Lazy;
use regex::Regex;

/// Default minimum candidate length in whitespace tokens.
pub const MIN_TOKENS: usize = 1;

static ENUMERATION: Lazy<Regex> = Lazy::new(|| {
    // "1.", "2)", "(3)", "-", "*", "•" list markers at line start
    Regex::new(r"(?m)^\s*(?:\(?\d{1,3}[.):]|[-*•])\s+").expect("enumeration regex")
});

static PREAMBLE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)^\s*(?:here (?:are|is)|sure[,!.]|paraphrase[sd]?\b|output\s*:)")
        .expect("preamble regex")
});

/// Split one completion into zero or more cleaned sentences: blank lines
/// and enumeration markers delimit examples, list markers are stripped,
/// whitespace is collapsed and fragments under [`MIN_TOKENS`] are dropped.
pub fn cleanup(raw: &str) -> Vec<String> {
    cleanup_with(raw, MIN_TOKENS)
}

pub fn cleanup_with(raw: &str, min_tokens: usize) -> Vec<String> {
    let normalized = raw.replace("\r\n", "\n");
    let mut blocks: Vec<String> = Vec::new();
    let mut current = String::new();
    for line in normalized.split('\n') {
        let is_blank = line.trim().is_empty();
        let is_item = ENUMERATION.is_match(line);
        if is_blank || is_item {
            if !current.trim().is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
            current.clear();
            if is_blank {
                continue;
            }
        }
        let content = ENUMERATION.replace(line, "");
        current.push(' ');
        current.push_str(&content);
    }
    if !current.trim().is_empty() {
        blocks.push(current);
    }

    blocks
        .into_iter()
        .map(|b| b.split_whitespace().collect::<Vec<_>>().join(" "))
        .map(|s| {
            s.trim_matches(|c| c == '"' || c == '“' || c == '”')
                .trim()
                .to_string()
        })
        .filter(|s| !(PREAMBLE.is_match(s) && s.ends_with(':')))
        .filter(|s| !s.is_empty() && s.split_whitespace().count() >= min_tokens)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbered_examples() {
        assert_eq!(cleanup("1. A hua\n\n2. B hua"), ["A hua", "B hua"]);
        assert_eq!(cleanup("1) A hua\n2) B hua"), ["A hua", "B hua"]);
    }

    #[test]
    fn whitespace_and_empty() {
        assert_eq!(cleanup("   text   "), ["text"]);
        assert!(cleanup("\n\n").is_empty());
        assert!(cleanup("").is_empty());
    }

    #[test]
    fn short_fragments_dropped() {
        assert_eq!(
            cleanup_with("ok\n\nmera account hack hua", 2),
            ["mera account hack hua"]
        );
    }

    #[test]
    fn preamble_and_quotes() {
        assert_eq!(
            cleanup(
                "Here are 2 paraphrases:\n- \"mera account hack hua\"\n- kisi ne account hack kiya"
            ),
            ["mera account hack hua", "kisi ne account hack kiya"]
        );
    }

    #[test]
    fn wrapped_lines_join() {
        assert_eq!(
            cleanup("1. first part\ncontinues here\n2. second one"),
            ["first part continues here", "second one"]
        );
    }
}
