//! A fine-tuned classifier: encoder weights, tokenizer and metadata, with
//! checkpoint persistence and the shared prediction interface.

use std::path::{Path, PathBuf};

use candle_core::{DType, Device};
use candle_nn::{VarBuilder, VarMap};
use crimeclass_core::fingerprint::{combine, json_fingerprint, sha256_file, sha256_hex};
use crimeclass_core::{
    CategoryLabel, DatasetSplit, PredictError, PredictionResult, TextClassifier,
};
use serde::{Deserialize, Serialize};

use crate::embedding_init::{cooccurrence_embeddings, EmbeddingInit};
use crate::model::{logits_to_vec, probabilities, seeded_init, EncoderClassifier};
use crate::registry::{EncoderConfig, ModelSpec};
use crate::tokenizer::{build_wordpiece_json, TextEncoder, TokenizerError};
use crate::train::{TrainingConfig, TrainingHistory};

pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const METADATA_FILE: &str = "metadata.json";
pub const HISTORY_FILE: &str = "history.json";
pub const TOKENIZER_FILE: &str = "tokenizer.json";
pub const CONFIG_FILE: &str = "config.json";
const FORMAT_VERSION: u32 = 1;
/// Word budget for vocabularies built from training text.
const MAX_WORDS: usize = 8000;
/// Words seen fewer times are tokenized as characters.
const MIN_WORD_COUNT: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("compute error: {0}")]
    Compute(#[from] candle_core::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn require(path: PathBuf) -> Result<PathBuf, ModelError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(ModelError::MissingArtifact(path))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub format_version: u32,
    pub label_order: Vec<CategoryLabel>,
    pub spec: ModelSpec,
    pub encoder_config: EncoderConfig,
    #[serde(default)]
    pub training_config: Option<TrainingConfig>,
    pub fingerprint: String,
    pub weights_sha256: String,
    pub tokenizer_sha256: String,
}

pub struct ClassifierModel {
    pub spec: ModelSpec,
    pub label_order: Vec<CategoryLabel>,
    pub training_config: Option<TrainingConfig>,
    pub history: Option<TrainingHistory>,
    pub fingerprint: String,
    varmap: VarMap,
    network: EncoderClassifier,
    encoder: TextEncoder,
}

impl std::fmt::Debug for ClassifierModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClassifierModel")
            .field("spec", &self.spec)
            .field("fingerprint", &self.fingerprint)
            .finish()
    }
}

impl ClassifierModel {
    fn assemble(
        spec: &ModelSpec,
        config: &EncoderConfig,
        encoder: TextEncoder,
    ) -> Result<(VarMap, EncoderClassifier), ModelError> {
        config
            .validate(spec.family, spec.max_sequence_length)
            .map_err(ModelError::Config)?;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &Device::Cpu);
        let network =
            EncoderClassifier::new(config, spec.family, spec.pooling, spec.num_labels, vb)?;
        let _ = encoder;
        Ok((varmap, network))
    }

    fn from_parts(
        spec: &ModelSpec,
        varmap: VarMap,
        network: EncoderClassifier,
        encoder: TextEncoder,
    ) -> Self {
        let fingerprint = combine(&[("spec", &json_fingerprint(spec)), ("state", "untrained")]);
        Self {
            spec: spec.clone(),
            label_order: CategoryLabel::ALL.to_vec(),
            training_config: None,
            history: None,
            fingerprint,
            varmap,
            network,
            encoder,
        }
    }

    /// Seeded random encoder with a vocabulary built from `texts`.
    pub fn random_init(spec: &ModelSpec, texts: &[&str], seed: u64) -> Result<Self, ModelError> {
        spec.validate().map_err(ModelError::Config)?;
        let mut config = spec.random_init.clone().ok_or_else(|| {
            ModelError::Config(format!("{} has no random-init architecture", spec.name))
        })?;
        let json = build_wordpiece_json(texts, spec.family, MAX_WORDS, MIN_WORD_COUNT)?;
        let encoder = TextEncoder::from_json(&json, spec.family, spec.max_sequence_length)?;
        config.vocab_size = encoder.vocab_size();
        config.pad_token_id = encoder.pad_id();
        let (varmap, network) = Self::assemble(spec, &config, encoder.clone())?;
        seeded_init(&varmap, &config, seed)?;
        if let EmbeddingInit::Cooccurrence { scale } = spec.embedding_init {
            let docs = texts
                .iter()
                .filter(|t| !t.trim().is_empty())
                .map(|t| encoder.encode(t).map(|e| e.ids[..e.used()].to_vec()))
                .collect::<Result<Vec<_>, _>>()?;
            let skip = encoder.special_ids();
            let row_norm = scale * config.initializer_range * (config.hidden_size as f64).sqrt();
            let rows = cooccurrence_embeddings(
                &docs,
                config.vocab_size,
                config.hidden_size,
                &skip,
                row_norm,
                seed,
            );
            let name = format!("{}.embeddings.word_embeddings.weight", spec.family.prefix());
            let data = varmap.data().lock().expect("varmap lock");
            let var = &data[&name];
            let mut table: Vec<f32> = var.as_tensor().flatten_all()?.to_vec1()?;
            for (i, row) in rows.into_iter().enumerate() {
                if let Some(row) = row {
                    table[i * config.hidden_size..(i + 1) * config.hidden_size]
                        .copy_from_slice(&row);
                }
            }
            var.set(&candle_core::Tensor::from_vec(
                table,
                var.shape(),
                &Device::Cpu,
            )?)?;
        }
        Ok(Self::from_parts(spec, varmap, network, encoder))
    }

    /// Published checkpoint directory (`config.json`, `tokenizer.json`,
    /// `model.safetensors`); the classification head is freshly initialized.
    pub fn from_pretrained(spec: &ModelSpec, dir: &Path, seed: u64) -> Result<Self, ModelError> {
        spec.validate().map_err(ModelError::Config)?;
        let config_path = require(dir.join(CONFIG_FILE))?;
        let raw = std::fs::read_to_string(&config_path).map_err(io_err(&config_path))?;
        let config: EncoderConfig = serde_json::from_str(&raw)
            .map_err(|e| ModelError::Config(format!("{}: {e}", config_path.display())))?;
        let encoder = TextEncoder::from_file(
            &require(dir.join(TOKENIZER_FILE))?,
            spec.family,
            spec.max_sequence_length,
        )?;
        let weights_path = require(dir.join(WEIGHTS_FILE))?;
        let (varmap, network) = Self::assemble(spec, &config, encoder.clone())?;
        seeded_init(&varmap, &config, seed)?;
        let tensors = candle_core::safetensors::load(&weights_path, &Device::Cpu)?;
        let prefix = format!("{}.", spec.family.prefix());
        {
            let data = varmap.data().lock().expect("varmap lock");
            let mut missing = Vec::new();
            for (name, var) in data.iter() {
                if name.starts_with("classifier.") {
                    continue;
                }
                let bare = name.strip_prefix(&prefix).unwrap_or(name);
                match tensors.get(name).or_else(|| tensors.get(bare)) {
                    Some(t) => var.set(&t.to_dtype(DType::F32)?)?,
                    None => missing.push(name.clone()),
                }
            }
            if !missing.is_empty() {
                missing.sort();
                return Err(ModelError::MissingArtifact(
                    weights_path.join(missing.join(",")),
                ));
            }
        }
        Ok(Self::from_parts(spec, varmap, network, encoder))
    }

    pub(crate) fn finish_training(
        &mut self,
        split: &DatasetSplit,
        config: TrainingConfig,
        history: TrainingHistory,
    ) {
        let mut rows: Vec<String> = split
            .train
            .iter()
            .chain(&split.validation)
            .map(|c| format!("{}\t{}\t{:?}", c.id, c.text, c.category))
            .collect();
        rows.sort();
        let data = sha256_hex(rows.join("\n").as_bytes());
        self.fingerprint = combine(&[
            ("spec", &json_fingerprint(&self.spec)),
            ("config", &json_fingerprint(&config)),
            ("data", &data),
        ]);
        self.training_config = Some(config);
        self.history = Some(history);
    }

    pub fn text_encoder(&self) -> &TextEncoder {
        &self.encoder
    }

    pub fn encoder_config(&self) -> &EncoderConfig {
        self.network.config()
    }

    pub(crate) fn varmap(&self) -> &VarMap {
        &self.varmap
    }

    pub(crate) fn network(&self) -> &EncoderClassifier {
        &self.network
    }

    /// Raw logits in `label_order`, one row per text. Each batch is padded
    /// only to its longest member.
    pub fn logits(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, PredictError> {
        let encoded = texts
            .iter()
            .map(|t| match self.encoder.encode(t) {
                Ok(e) => Ok(e),
                Err(TokenizerError::EmptyText) => Err(PredictError::EmptyText),
                Err(e) => Err(PredictError::Encoding(e.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let len = encoded.iter().map(|e| e.used()).max().unwrap_or(0);
        let ids: Vec<Vec<u32>> = encoded.iter().map(|e| e.ids[..len].to_vec()).collect();
        let mask: Vec<Vec<u32>> = encoded
            .iter()
            .map(|e| e.attention_mask[..len].to_vec())
            .collect();
        let backend = |e: candle_core::Error| PredictError::Backend(e.to_string());
        let logits = self.network.forward(&ids, &mask, None).map_err(backend)?;
        logits_to_vec(&logits).map_err(backend)
    }

    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let weights = dir.join(WEIGHTS_FILE);
        self.varmap.save(&weights)?;
        let tokenizer = dir.join(TOKENIZER_FILE);
        std::fs::write(&tokenizer, self.encoder.to_json()?).map_err(io_err(&tokenizer))?;
        let meta = Metadata {
            format_version: FORMAT_VERSION,
            label_order: self.label_order.clone(),
            spec: self.spec.clone(),
            encoder_config: self.network.config().clone(),
            training_config: self.training_config.clone(),
            fingerprint: self.fingerprint.clone(),
            weights_sha256: sha256_file(&weights).map_err(io_err(&weights))?,
            tokenizer_sha256: sha256_file(&tokenizer).map_err(io_err(&tokenizer))?,
        };
        let meta_path = dir.join(METADATA_FILE);
        let body = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        std::fs::write(&meta_path, body).map_err(io_err(&meta_path))?;
        if let Some(h) = &self.history {
            let path = dir.join(HISTORY_FILE);
            std::fs::write(
                &path,
                serde_json::to_string_pretty(h).expect("history serializes"),
            )
            .map_err(io_err(&path))?;
        }
        Ok(())
    }

    pub fn read_metadata(dir: &Path) -> Result<Metadata, ModelError> {
        let path = require(dir.join(METADATA_FILE))?;
        let raw = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&raw)
            .map_err(|e| ModelError::Integrity(format!("unreadable metadata: {e}")))
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let meta = Self::read_metadata(dir)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(ModelError::Integrity(format!(
                "unsupported format version {}",
                meta.format_version
            )));
        }
        let weights = require(dir.join(WEIGHTS_FILE))?;
        let tokenizer = require(dir.join(TOKENIZER_FILE))?;
        if sha256_file(&weights).map_err(io_err(&weights))? != meta.weights_sha256 {
            return Err(ModelError::Integrity(
                "weights do not match metadata fingerprint".into(),
            ));
        }
        if sha256_file(&tokenizer).map_err(io_err(&tokenizer))? != meta.tokenizer_sha256 {
            return Err(ModelError::Integrity(
                "tokenizer does not match metadata fingerprint".into(),
            ));
        }
        let encoder =
            TextEncoder::from_file(&tokenizer, meta.spec.family, meta.spec.max_sequence_length)?;
        let (mut varmap, network) =
            Self::assemble(&meta.spec, &meta.encoder_config, encoder.clone())?;
        varmap.load(&weights)?;
        let history = match std::fs::read_to_string(dir.join(HISTORY_FILE)) {
            Ok(raw) => serde_json::from_str(&raw).ok(),
            Err(_) => None,
        };
        Ok(Self {
            spec: meta.spec,
            label_order: meta.label_order,
            training_config: meta.training_config,
            history,
            fingerprint: meta.fingerprint,
            varmap,
            network,
            encoder,
        })
    }
}

impl TextClassifier for ClassifierModel {
    fn kind(&self) -> &str {
        "transformer"
    }

    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn label_order(&self) -> &[CategoryLabel] {
        &self.label_order
    }

    fn predict(&self, text: &str) -> Result<PredictionResult, PredictError> {
        Ok(self.predict_batch(&[text])?.remove(0))
    }

    fn predict_batch(&self, texts: &[&str]) -> Result<Vec<PredictionResult>, PredictError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(32) {
            for row in self.logits(chunk)? {
                out.push(PredictionResult::from_probabilities(
                    &self.label_order,
                    &probabilities(&row),
                    &self.fingerprint,
                ));
            }
        }
        Ok(out)
    }
}
