//! Minority-class augmentation: paraphrase generation, cleanup,
//! similarity gating and per-class growth toward a target distribution.

pub mod cleanup;
pub mod generator;
pub mod similarity;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anonymizer::{Anonymizer, AnonymizerConfig, RecognizerFactory};
use crate::corpus::{class_counts, dedup_key, Complaint, DatasetSplit, Source};
use crate::labels::CategoryLabel;
pub use cleanup::cleanup;
pub use generator::{
    generate_with_retry, GenerationRequest, GeneratorClient, GeneratorError, HttpGenerator,
    RetryPolicy, ShuffleParaphraser,
};
pub use similarity::{
    similarity, HashedTokenEmbedder, SimilarityError, SimilarityGateConfig, SimilarityMode,
    TokenEmbedder,
};

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("invalid target for {label}: target {target} < base {base}")]
    TargetBelowBase {
        label: CategoryLabel,
        target: usize,
        base: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("targets file: {0}")]
    Targets(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    BelowThreshold,
    EmptyAfterCleanup,
    DuplicateOfExisting,
}

/// A generated paraphrase and the gate's verdict on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationCandidate {
    pub parent_id: String,
    pub generated_text: String,
    pub similarity: f64,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection_reason: Option<RejectionReason>,
}

/// Per-class target counts after augmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct TargetDistribution(pub BTreeMap<CategoryLabel, usize>);

/// Reference base and augmented class counts, in canonical label order.
pub const REFERENCE_COUNTS: [(CategoryLabel, usize, usize); 14] = [
    (CategoryLabel::OtherCyberCrime, 10811, 10826),
    (CategoryLabel::ChildAbuseMaterial, 357, 1672),
    (CategoryLabel::CryptocurrencyCrime, 473, 2579),
    (CategoryLabel::CyberAttackDependentCrimes, 3608, 3625),
    (CategoryLabel::CyberTerrorism, 161, 1150),
    (CategoryLabel::HackingDamage, 1709, 8091),
    (CategoryLabel::CyberTrafficking, 183, 889),
    (CategoryLabel::FinancialFraud, 52496, 52517),
    (CategoryLabel::GamblingBetting, 444, 2640),
    (CategoryLabel::SocialMediaCrime, 12076, 12086),
    (CategoryLabel::Ransomware, 56, 273),
    (CategoryLabel::RapeOrSexualAbuseContent, 248, 258),
    (CategoryLabel::SexuallyExplicitContent, 1489, 6118),
    (CategoryLabel::SexuallyObsceneContent, 1764, 6570),
];

/// Alternative target rule for new corpora.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierPolicy {
    pub factor: f64,
    pub cap: usize,
}

impl TargetDistribution {
    /// The reference augmented counts, loaded verbatim.
    pub fn reference() -> Self {
        Self(REFERENCE_COUNTS.iter().map(|(l, _, t)| (*l, *t)).collect())
    }

    /// The reference base counts.
    pub fn reference_base() -> BTreeMap<CategoryLabel, usize> {
        REFERENCE_COUNTS.iter().map(|(l, b, _)| (*l, *b)).collect()
    }

    /// `target = max(base, min(round(base · factor), cap))`.
    pub fn from_policy(base: &BTreeMap<CategoryLabel, usize>, policy: MultiplierPolicy) -> Self {
        Self(
            base.iter()
                .map(|(l, &b)| {
                    let grown = ((b as f64 * policy.factor).round() as usize).min(policy.cap);
                    (*l, grown.max(b))
                })
                .collect(),
        )
    }

    pub fn from_json(raw: &str) -> Result<Self, AugmentError> {
        serde_json::from_str(raw).map_err(|e| AugmentError::Targets(e.to_string()))
    }

    /// Target for `label`; classes without an entry keep their base count.
    pub fn target(&self, label: CategoryLabel, base: usize) -> usize {
        self.0.get(&label).copied().unwrap_or(base)
    }

    pub fn validate(&self, base: &BTreeMap<CategoryLabel, usize>) -> Result<(), AugmentError> {
        for (label, &b) in base {
            let t = self.target(*label, b);
            if t < b {
                return Err(AugmentError::TargetBelowBase {
                    label: *label,
                    target: t,
                    base: b,
                });
            }
        }
        Ok(())
    }
}

/// Accept/reject decisions against a threshold and the set of texts
/// already in the corpus (including earlier acceptances).
#[derive(Debug, Clone)]
pub struct Gate {
    theta: f64,
    seen: HashSet<String>,
}

impl Gate {
    pub fn new<'a>(theta: f64, existing: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            theta,
            seen: existing.into_iter().map(dedup_key).collect(),
        }
    }

    /// Threshold comparison is inclusive (`similarity ≥ θ`).
    pub fn judge(&mut self, candidate: &mut AugmentationCandidate) {
        let reason = if candidate.generated_text.trim().is_empty() {
            Some(RejectionReason::EmptyAfterCleanup)
        } else if candidate.similarity < self.theta {
            Some(RejectionReason::BelowThreshold)
        } else if !self.seen.insert(dedup_key(&candidate.generated_text)) {
            Some(RejectionReason::DuplicateOfExisting)
        } else {
            None
        };
        candidate.accepted = reason.is_none();
        candidate.rejection_reason = reason;
    }
}

/// Partition scored candidates into accepted and rejected lists.
pub fn gate(
    candidates: Vec<AugmentationCandidate>,
    theta: f64,
    existing: &[Complaint],
) -> (Vec<AugmentationCandidate>, Vec<AugmentationCandidate>) {
    let mut g = Gate::new(theta, existing.iter().map(|c| c.text.as_str()));
    candidates
        .into_iter()
        .map(|mut c| {
            g.judge(&mut c);
            c
        })
        .partition(|c| c.accepted)
}

pub const DEFAULT_PROMPT_TEMPLATE: &str = "Paraphrase the following complaint {n} times. \
Preserve its meaning, keep placeholder tokens such as <PERSON>, <PHONE> or <EMAIL> exactly as written, \
and use the same mix of Hindi and English. Answer with a numbered list only.\nText: {text}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmenterConfig {
    pub gate: SimilarityGateConfig,
    pub prompt_template: String,
    /// Paraphrases requested per generation call.
    pub per_call: usize,
    pub max_tokens: usize,
    /// Candidate attempts allowed per class, as a multiple of `target − base`.
    pub budget_multiplier: usize,
    pub min_tokens: usize,
    pub seed: u64,
    /// Applied to every candidate before scoring and insertion.
    pub anonymizer: AnonymizerConfig,
}

impl Default for AugmenterConfig {
    fn default() -> Self {
        Self {
            gate: SimilarityGateConfig::default(),
            prompt_template: DEFAULT_PROMPT_TEMPLATE.into(),
            per_call: 5,
            max_tokens: 512,
            budget_multiplier: 20,
            min_tokens: cleanup::MIN_TOKENS,
            seed: 0,
            anonymizer: AnonymizerConfig::default(),
        }
    }
}

impl AugmenterConfig {
    pub fn render_prompt(&self, text: &str, n: usize) -> String {
        self.prompt_template
            .replace("{n}", &n.to_string())
            .replace("{text}", text)
    }
}

fn request_seed(base: u64, parent_id: &str, round: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(parent_id.as_bytes());
    h.update((round as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Ask the backend for up to `n` paraphrases of an (already anonymized)
/// complaint.
pub fn generate_candidates(
    complaint: &Complaint,
    n: usize,
    client: &dyn GeneratorClient,
    config: &AugmenterConfig,
    round: usize,
) -> Result<Vec<String>, GeneratorError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let request = GenerationRequest {
        model_id: client.model_id().to_string(),
        prompt: config.render_prompt(&complaint.text, n),
        n,
        seed: Some(request_seed(config.seed, &complaint.id, round)),
        max_tokens: config.max_tokens,
    };
    generate_with_retry(client, &request)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassAugmentation {
    pub base: usize,
    pub target: usize,
    pub attempted: usize,
    pub accepted: usize,
    pub rejected_by_reason: BTreeMap<RejectionReason, usize>,
    pub generation_failures: usize,
    pub final_count: usize,
    /// Set when the class stopped short of its target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub generator_model: String,
    pub prompt_template: String,
    pub theta: f64,
    pub mode: SimilarityMode,
    pub embedder: String,
    pub classes: BTreeMap<CategoryLabel, ClassAugmentation>,
}

#[derive(Debug, Default)]
pub struct AugmentationOutput {
    pub additions: Vec<Complaint>,
    pub report: AugmentationReport,
    pub candidates: Vec<AugmentationCandidate>,
}

/// Grow each training class toward its target. Only the training
/// partition is read; validation and test are never touched.
pub fn augment_corpus(
    split: &DatasetSplit,
    targets: &TargetDistribution,
    client: &dyn GeneratorClient,
    embedder: &dyn TokenEmbedder,
    recognizers: &RecognizerFactory,
    config: &AugmenterConfig,
) -> Result<AugmentationOutput, AugmentError> {
    config.gate.validate().map_err(AugmentError::Config)?;
    if config.per_call == 0 {
        return Err(AugmentError::Config("per_call must be positive".into()));
    }
    let base = class_counts(&split.train);
    targets.validate(&base)?;

    let mut out = AugmentationOutput {
        report: AugmentationReport {
            generator_model: client.model_id().to_string(),
            prompt_template: config.prompt_template.clone(),
            theta: config.gate.theta,
            mode: config.gate.mode,
            embedder: embedder.id().to_string(),
            classes: BTreeMap::new(),
        },
        ..Default::default()
    };
    let mut gate = Gate::new(
        config.gate.theta,
        split.train.iter().map(|c| c.text.as_str()),
    );
    let mut anonymizer = Anonymizer::new(recognizers(), config.anonymizer.fallback);
    let mut child_counter: HashMap<String, usize> = HashMap::new();
    let parallelism = client.max_parallelism().max(1);

    for (&label, &base_count) in &base {
        let target = targets.target(label, base_count);
        let need = target - base_count;
        let mut stats = ClassAugmentation {
            base: base_count,
            target,
            ..Default::default()
        };
        let parents: Vec<&Complaint> = split
            .train
            .iter()
            .filter(|c| c.category == Some(label) && c.source == Source::Original)
            .collect();
        let budget = need * config.budget_multiplier;
        let mut cursor = 0usize;

        while stats.accepted < need && stats.attempted < budget && !parents.is_empty() {
            let batch: Vec<(usize, &Complaint)> = (0..parallelism.min(parents.len()))
                .map(|k| {
                    let i = cursor + k;
                    (i / parents.len(), parents[i % parents.len()])
                })
                .collect();
            cursor += batch.len();
            let generated: Vec<Result<Vec<String>, GeneratorError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|&(round, parent)| {
                        scope.spawn(move || {
                            generate_candidates(parent, config.per_call, client, config, round)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("generator worker panicked"))
                    .collect()
            });

            for ((_, parent), result) in batch.iter().zip(generated) {
                if stats.accepted >= need || stats.attempted >= budget {
                    break;
                }
                let raws = match result {
                    Ok(r) => r,
                    Err(e) => {
                        log::warn!("generation failed for {}: {e}", parent.id);
                        stats.generation_failures += 1;
                        stats.attempted += 1;
                        continue;
                    }
                };
                let mut sentences: Vec<String> = raws
                    .iter()
                    .flat_map(|r| cleanup::cleanup_with(r, config.min_tokens))
                    .collect();
                if sentences.is_empty() {
                    // count the empty answer so a silent backend still exhausts the budget
                    sentences.push(String::new());
                }
                for sentence in sentences {
                    if stats.accepted >= need || stats.attempted >= budget {
                        break;
                    }
                    stats.attempted += 1;
                    let text = if sentence.is_empty() {
                        String::new()
                    } else {
                        match anonymizer.anonymize(&sentence, &config.anonymizer) {
                            Ok((t, _)) => t,
                            Err(e) => {
                                log::warn!("candidate of {} failed anonymization: {e}", parent.id);
                                String::new()
                            }
                        }
                    };
                    let score = if text.is_empty() {
                        0.0
                    } else {
                        similarity(&parent.text, &text, config.gate.mode, embedder)?
                    };
                    let mut candidate = AugmentationCandidate {
                        parent_id: parent.id.clone(),
                        generated_text: text,
                        similarity: score,
                        accepted: false,
                        rejection_reason: None,
                    };
                    gate.judge(&mut candidate);
                    match candidate.rejection_reason {
                        None => {
                            stats.accepted += 1;
                            let k = child_counter.entry(parent.id.clone()).or_insert(0);
                            *k += 1;
                            out.additions.push(Complaint::augmented(
                                format!("{}-aug-{}", parent.id, k),
                                candidate.generated_text.clone(),
                                label,
                                parent.id.clone(),
                            ));
                        }
                        Some(reason) => *stats.rejected_by_reason.entry(reason).or_insert(0) += 1,
                    }
                    out.candidates.push(candidate);
                }
            }
        }
        if stats.accepted < need {
            let msg = if parents.is_empty() {
                format!("{label}: no original training complaints to paraphrase")
            } else {
                format!(
                    "{label}: budget of {budget} attempts exhausted with {}/{need} accepted",
                    stats.accepted
                )
            };
            log::warn!("{msg}");
            stats.warning = Some(msg);
        }
        stats.final_count = base_count + stats.accepted;
        out.report.classes.insert(label, stats);
    }
    Ok(out)
}
