//! Subword tokenization with truncation and fixed-length padding.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::str::FromStr;

use crimeclass_core::anonymizer::EntityKind;
use serde_json::json;
use tokenizers::{PaddingParams, PaddingStrategy, Tokenizer, TruncationParams};

use crate::registry::Family;

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("cannot encode empty text")]
    EmptyText,
    #[error("tokenizer error: {0}")]
    Backend(String),
    #[error("special token {0} missing from vocabulary")]
    MissingSpecial(String),
}

fn backend(e: impl std::fmt::Display) -> TokenizerError {
    TokenizerError::Backend(e.to_string())
}

/// Token ids and attention mask, both `max_length` long.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedText {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u32>,
}

impl EncodedText {
    /// Number of non-padding positions.
    pub fn used(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }
}

/// A tokenizer bound to a sequence length.
#[derive(Clone)]
pub struct TextEncoder {
    tokenizer: Tokenizer,
    max_length: usize,
    pad_id: u32,
    family: Family,
}

impl std::fmt::Debug for TextEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TextEncoder")
            .field("vocab_size", &self.vocab_size())
            .field("max_length", &self.max_length)
            .finish()
    }
}

fn pre_split(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_whitespace()) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Build a WordPiece tokenizer from a corpus: the special tokens, the
/// placeholder tokens, every character (word-initial and `##`
/// continuation), then whole words seen at least `min_count` times, by
/// descending frequency up to `max_words`. Rarer words fall back to
/// character pieces. Returned in `tokenizer.json` form.
pub fn build_wordpiece_json(
    texts: &[&str],
    family: Family,
    max_words: usize,
    min_count: usize,
) -> Result<String, TokenizerError> {
    let [cls, sep, pad, unk, mask] = family.special_tokens();
    let mut vocab: Vec<String> = match family {
        // conventional positions so pad_token_id matches the family default
        Family::Bert => vec![pad, unk, cls, sep, mask],
        Family::Roberta => vec![cls, pad, sep, unk, mask],
    }
    .into_iter()
    .map(String::from)
    .collect();
    vocab.extend(EntityKind::ALL.iter().map(|k| k.placeholder().to_string()));

    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut chars = BTreeSet::new();
    for text in texts {
        for w in pre_split(text) {
            chars.extend(w.chars());
            *counts.entry(w).or_default() += 1;
        }
    }
    for c in &chars {
        vocab.push(c.to_string());
        vocab.push(format!("##{c}"));
    }
    let mut words: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(w, n)| w.chars().count() > 1 && *n >= min_count)
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    vocab.extend(words.into_iter().take(max_words).map(|(w, _)| w));
    let mut seen = BTreeSet::new();
    vocab.retain(|t| seen.insert(t.clone()));

    let ids: BTreeMap<&str, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let added: Vec<_> = vocab
        .iter()
        .take(5 + EntityKind::ALL.len())
        .enumerate()
        .map(|(i, t)| {
            json!({
                "id": i, "content": t, "single_word": false, "lstrip": false, "rstrip": false,
                "normalized": false, "special": i < 5
            })
        })
        .collect();
    Ok(json!({
        "version": "1.0",
        "truncation": null,
        "padding": null,
        "added_tokens": added,
        "normalizer": {"type": "BertNormalizer", "clean_text": true, "handle_chinese_chars": true,
                       "strip_accents": null, "lowercase": true},
        "pre_tokenizer": {"type": "BertPreTokenizer"},
        "post_processor": {"type": "BertProcessing", "sep": [sep, ids[sep]], "cls": [cls, ids[cls]]},
        "decoder": {"type": "WordPiece", "prefix": "##", "cleanup": true},
        "model": {"type": "WordPiece", "unk_token": unk, "continuing_subword_prefix": "##",
                  "max_input_chars_per_word": 100, "vocab": ids}
    })
    .to_string())
}

impl TextEncoder {
    pub fn from_json(
        json: &str,
        family: Family,
        max_length: usize,
    ) -> Result<Self, TokenizerError> {
        let tokenizer = Tokenizer::from_str(json).map_err(backend)?;
        Self::new(tokenizer, family, max_length)
    }

    pub fn from_file(
        path: &Path,
        family: Family,
        max_length: usize,
    ) -> Result<Self, TokenizerError> {
        let tokenizer = Tokenizer::from_file(path).map_err(backend)?;
        Self::new(tokenizer, family, max_length)
    }

    pub fn new(
        mut tokenizer: Tokenizer,
        family: Family,
        max_length: usize,
    ) -> Result<Self, TokenizerError> {
        let pad_token = family.special_tokens()[2];
        let pad_id = tokenizer
            .token_to_id(pad_token)
            .ok_or_else(|| TokenizerError::MissingSpecial(pad_token.into()))?;
        tokenizer
            .with_truncation(Some(TruncationParams {
                max_length,
                ..Default::default()
            }))
            .map_err(backend)?;
        tokenizer.with_padding(Some(PaddingParams {
            strategy: PaddingStrategy::Fixed(max_length),
            pad_id,
            pad_token: pad_token.into(),
            ..Default::default()
        }));
        Ok(Self {
            tokenizer,
            max_length,
            pad_id,
            family,
        })
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    /// Ids of the family's special tokens present in the vocabulary.
    pub fn special_ids(&self) -> Vec<u32> {
        self.family
            .special_tokens()
            .iter()
            .filter_map(|t| self.tokenizer.token_to_id(t))
            .collect()
    }

    pub fn vocab_size(&self) -> usize {
        self.tokenizer.get_vocab_size(true)
    }

    pub fn encode(&self, text: &str) -> Result<EncodedText, TokenizerError> {
        if text.trim().is_empty() {
            return Err(TokenizerError::EmptyText);
        }
        let enc = self.tokenizer.encode(text, true).map_err(backend)?;
        Ok(EncodedText {
            ids: enc.get_ids().to_vec(),
            attention_mask: enc.get_attention_mask().to_vec(),
        })
    }

    /// Serialized form without the truncation/padding settings, which are
    /// re-applied from the model spec on load.
    pub fn to_json(&self) -> Result<String, TokenizerError> {
        let mut t = self.tokenizer.clone();
        t.with_truncation(None).map_err(backend)?;
        t.with_padding(None);
        t.to_string(false).map_err(backend)
    }
}
