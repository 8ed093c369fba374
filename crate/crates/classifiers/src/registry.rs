//! Encoder families, architecture hyper-parameters and the model registry.

use serde::{Deserialize, Serialize};

use crimeclass_core::NUM_LABELS;

pub use crate::embedding_init::EmbeddingInit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bert,
    Roberta,
}

impl Family {
    /// Parameter-name prefix used by published checkpoints.
    pub fn prefix(self) -> &'static str {
        match self {
            Family::Bert => "bert",
            Family::Roberta => "roberta",
        }
    }

    /// (cls, sep, pad, unk, mask) special tokens.
    pub fn special_tokens(self) -> [&'static str; 5] {
        match self {
            Family::Bert => ["[CLS]", "[SEP]", "[PAD]", "[UNK]", "[MASK]"],
            Family::Roberta => ["<s>", "</s>", "<pad>", "<unk>", "<mask>"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Hidden state of the first (classifier) token.
    #[default]
    FirstToken,
    /// Mask-weighted mean over tokens.
    Mean,
}

/// Architecture hyper-parameters, named as in published `config.json` files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_dropout")]
    pub hidden_dropout_prob: f64,
    #[serde(default = "default_init_range")]
    pub initializer_range: f64,
    #[serde(default)]
    pub pad_token_id: u32,
}

fn default_type_vocab() -> usize {
    2
}
fn default_eps() -> f64 {
    1e-12
}
fn default_dropout() -> f64 {
    0.1
}
fn default_init_range() -> f64 {
    0.02
}

impl EncoderConfig {
    /// Shallow encoder of base width for desk-scale runs; `vocab_size` is
    /// set once the tokenizer is built.
    pub fn smoke(family: Family) -> Self {
        Self {
            vocab_size: 0,
            hidden_size: 768,
            num_hidden_layers: 1,
            num_attention_heads: 12,
            intermediate_size: 1536,
            max_position_embeddings: 260,
            type_vocab_size: 1,
            layer_norm_eps: 1e-12,
            hidden_dropout_prob: 0.1,
            initializer_range: 0.02,
            pad_token_id: if family == Family::Roberta { 1 } else { 0 },
        }
    }

    pub fn validate(&self, family: Family, max_sequence_length: usize) -> Result<(), String> {
        if self.hidden_size == 0
            || self.num_attention_heads == 0
            || self.hidden_size % self.num_attention_heads != 0
        {
            return Err(format!(
                "hidden_size {} not divisible by num_attention_heads {}",
                self.hidden_size, self.num_attention_heads
            ));
        }
        let offset = match family {
            Family::Bert => 0,
            Family::Roberta => self.pad_token_id as usize + 1,
        };
        if max_sequence_length + offset > self.max_position_embeddings {
            return Err(format!(
                "sequence length {max_sequence_length} exceeds {} position embeddings",
                self.max_position_embeddings
            ));
        }
        if self.vocab_size == 0 {
            return Err("vocab_size is zero".into());
        }
        Ok(())
    }
}

const SMOKE_EMBEDDING_SCALE: f64 = 4.0;

pub const SEQUENCE_LENGTHS: [usize; 2] = [128, 256];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Registry name, e.g. `hingroberta`.
    pub name: String,
    /// Pretrained artifact identifier.
    pub model_id: String,
    pub family: Family,
    pub max_sequence_length: usize,
    pub num_labels: usize,
    #[serde(default)]
    pub pooling: Pooling,
    /// Seeded random initialization with this architecture instead of
    /// loading pretrained weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_init: Option<EncoderConfig>,
    /// Word-embedding initialization for `random_init` encoders.
    #[serde(default)]
    pub embedding_init: EmbeddingInit,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.num_labels != NUM_LABELS {
            return Err(format!(
                "num_labels must be {NUM_LABELS}, got {}",
                self.num_labels
            ));
        }
        if !SEQUENCE_LENGTHS.contains(&self.max_sequence_length) {
            return Err(format!(
                "max_sequence_length must be one of {SEQUENCE_LENGTHS:?}, got {}",
                self.max_sequence_length
            ));
        }
        Ok(())
    }

    /// Desk-scale variant of this entry: same family and tokenizer
    /// conventions, a shallow encoder built locally with co-occurrence
    /// word embeddings and mean pooling.
    pub fn smoke(mut self) -> Self {
        self.random_init = Some(EncoderConfig::smoke(self.family));
        self.embedding_init = EmbeddingInit::Cooccurrence {
            scale: SMOKE_EMBEDDING_SCALE,
        };
        self.pooling = Pooling::Mean;
        self.model_id = format!("{}+smoke", self.model_id);
        self
    }

    pub fn with_max_sequence_length(mut self, len: usize) -> Self {
        self.max_sequence_length = len;
        self
    }
}

const REGISTRY: [(&str, &str, Family); 4] = [
    ("bert", "bert-base-uncased", Family::Bert),
    ("roberta", "roberta-base", Family::Roberta),
    ("hingbert", "l3cube-pune/hing-bert", Family::Bert),
    ("hingroberta", "l3cube-pune/hing-roberta", Family::Roberta),
];

pub fn registry() -> Vec<ModelSpec> {
    REGISTRY
        .iter()
        .map(|&(name, model_id, family)| ModelSpec {
            name: name.into(),
            model_id: model_id.into(),
            family,
            max_sequence_length: 128,
            num_labels: NUM_LABELS,
            pooling: Pooling::FirstToken,
            random_init: None,
            embedding_init: EmbeddingInit::Random,
        })
        .collect()
}

pub fn lookup(name: &str) -> Option<ModelSpec> {
    registry().into_iter().find(|s| s.name == name)
}
