//! Fine-tuning with early stopping, and the optimizer seam.

use std::collections::BTreeSet;
use std::sync::Arc;

use candle_core::{Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use crimeclass_core::evaluator::{evaluate_pairs, Averaging};
use crimeclass_core::{CategoryLabel, DatasetSplit};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierModel, ModelError};
use crate::model::{argmax_rows, Dropout};
use crate::registry::ModelSpec;

pub const LEARNING_RATES: [f64; 3] = [1e-5, 2e-5, 3e-5];
pub const BATCH_SIZES: [usize; 3] = [8, 16, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStoppingMetric {
    ValidationAccuracy,
    /// Macro-averaged F1 on the validation partition.
    #[default]
    ValidationF1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear warmup over the first fraction of steps, then linear decay
    /// to zero.
    LinearWarmupDecay { warmup_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub early_stopping_patience: usize,
    pub early_stopping_metric: EarlyStoppingMetric,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            batch_size: 16,
            weight_decay: 0.01,
            max_epochs: 30,
            early_stopping_patience: 5,
            early_stopping_metric: EarlyStoppingMetric::ValidationF1,
            schedule: LrSchedule::Constant,
            seed: 42,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(1e-5..=3e-5).contains(&self.learning_rate) {
            return Err(format!(
                "learning_rate {} outside [1e-5, 3e-5]",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stopping_patience == 0 {
            return Err(
                "batch_size, max_epochs and early_stopping_patience must be positive".into(),
            );
        }
        if self.weight_decay < 0.0 {
            return Err("weight_decay must be non-negative".into());
        }
        if let LrSchedule::LinearWarmupDecay { warmup_fraction } = self.schedule {
            if !(0.0..1.0).contains(&warmup_fraction) {
                return Err(format!("warmup_fraction {warmup_fraction} outside [0, 1)"));
            }
        }
        Ok(())
    }

    fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::LinearWarmupDecay { warmup_fraction } => {
                let warmup = (warmup_fraction * total as f64).ceil() as usize;
                if step < warmup {
                    self.learning_rate * (step + 1) as f64 / warmup as f64
                } else {
                    let left = total.saturating_sub(step) as f64 / (total - warmup).max(1) as f64;
                    self.learning_rate * left
                }
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(
        "non-finite loss {loss} at epoch {epoch}, batch {batch} (learning rate {learning_rate})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
        loss: f32,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("compute error: {0}")]
    Compute(#[from] candle_core::Error),
    #[error("every grid point failed: {0:?}")]
    AllGridPointsFailed(Vec<String>),
}

/// One optimization step given a scalar loss.
pub trait StepOptimizer: Send {
    fn step(&mut self, loss: &Tensor) -> candle_core::Result<()>;

    fn set_learning_rate(&mut self, lr: f64);
}

struct AdamWStep(AdamW);

impl StepOptimizer for AdamWStep {
    fn step(&mut self, loss: &Tensor) -> candle_core::Result<()> {
        self.0.backward_step(loss)
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.0.set_learning_rate(lr);
    }
}

pub type OptimizerFactory = Arc<
    dyn Fn(Vec<Var>, &TrainingConfig) -> candle_core::Result<Box<dyn StepOptimizer>> + Send + Sync,
>;

/// Decoupled-weight-decay Adam.
pub fn adamw() -> OptimizerFactory {
    Arc::new(|vars, cfg| {
        let params = ParamsAdamW {
            lr: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        };
        Ok(Box::new(AdamWStep(AdamW::new(vars, params)?)) as Box<dyn StepOptimizer>)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochOutcome {
    pub train_loss: f64,
    pub validation_accuracy: f64,
    pub validation_f1: f64,
}

impl EpochOutcome {
    pub fn metric(&self, which: EarlyStoppingMetric) -> f64 {
        match which {
            EarlyStoppingMetric::ValidationAccuracy => self.validation_accuracy,
            EarlyStoppingMetric::ValidationF1 => self.validation_f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    #[serde(flatten)]
    pub outcome: EpochOutcome,
    pub metric: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub stop_reason: StopReason,
}

impl TrainingHistory {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }
}

/// Drive epochs until `patience` consecutive epochs fail to improve the
/// metric strictly, or `max_epochs` is reached. `on_improve` runs after
/// every epoch that sets a new best, so the caller can snapshot weights.
pub fn run_training_loop<E>(
    max_epochs: usize,
    patience: usize,
    metric: EarlyStoppingMetric,
    mut run_epoch: impl FnMut(usize) -> Result<EpochOutcome, E>,
    mut on_improve: impl FnMut(usize) -> Result<(), E>,
) -> Result<TrainingHistory, E> {
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for epoch in 1..=max_epochs {
        let outcome = run_epoch(epoch)?;
        let value = outcome.metric(metric);
        let improved = best.is_none_or(|(_, b)| value > b);
        if improved {
            best = Some((epoch, value));
            on_improve(epoch)?;
        }
        epochs.push(EpochRecord {
            epoch,
            outcome,
            metric: value,
            improved,
        });
        let (best_epoch, _) = best.expect("set on first epoch");
        if epoch - best_epoch >= patience {
            let (best_epoch, best_metric) = best.expect("set");
            return Ok(TrainingHistory {
                epochs,
                best_epoch,
                best_metric,
                stop_reason: StopReason::Patience,
            });
        }
    }
    let (best_epoch, best_metric) = best.expect("max_epochs >= 1");
    Ok(TrainingHistory {
        epochs,
        best_epoch,
        best_metric,
        stop_reason: StopReason::MaxEpochs,
    })
}

/// Encoded example trimmed to its used length.
struct Example {
    ids: Vec<u32>,
    label: u32,
}

fn pad_batch(rows: &[&[u32]], pad: u32) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let len = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let ids = rows
        .iter()
        .map(|r| {
            r.iter()
                .copied()
                .chain(std::iter::repeat(pad))
                .take(len)
                .collect()
        })
        .collect();
    let mask = rows
        .iter()
        .map(|r| (0..len).map(|i| u32::from(i < r.len())).collect())
        .collect();
    (ids, mask)
}

fn labels_of(docs: &[crimeclass_core::Complaint]) -> Result<Vec<CategoryLabel>, TrainError> {
    docs.iter()
        .map(|c| {
            c.category
                .ok_or_else(|| TrainError::Precondition(format!("complaint {} has no label", c.id)))
        })
        .collect()
}

pub struct TrainOptions {
    pub optimizer: OptimizerFactory,
    /// Directory with `config.json`, `tokenizer.json` and
    /// `model.safetensors` for specs without `random_init`.
    pub pretrained_dir: Option<std::path::PathBuf>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            optimizer: adamw(),
            pretrained_dir: None,
        }
    }
}

/// Fine-tune `spec` on `split.train`, selecting the epoch with the best
/// validation metric.
pub fn train(
    split: &DatasetSplit,
    spec: &ModelSpec,
    config: &TrainingConfig,
    options: &TrainOptions,
) -> Result<ClassifierModel, TrainError> {
    spec.validate().map_err(TrainError::Config)?;
    config.validate().map_err(TrainError::Config)?;
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(TrainError::Precondition(
            "train and validation must be non-empty".into(),
        ));
    }
    let train_labels = labels_of(&split.train)?;
    let val_labels = labels_of(&split.validation)?;
    let train_classes: BTreeSet<_> = train_labels.iter().copied().collect();
    let val_classes: BTreeSet<_> = val_labels.iter().copied().collect();
    let missing: Vec<String> = train_classes
        .difference(&val_classes)
        .map(|l| l.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(TrainError::Precondition(format!(
            "no validation samples for {missing:?}"
        )));
    }

    let mut model = match (&spec.random_init, &options.pretrained_dir) {
        (Some(_), _) => {
            let texts: Vec<&str> = split.train.iter().map(|c| c.text.as_str()).collect();
            ClassifierModel::random_init(spec, &texts, config.seed)?
        }
        (None, Some(dir)) => ClassifierModel::from_pretrained(spec, dir, config.seed)?,
        (None, None) => {
            return Err(TrainError::Config(format!(
                "{} needs pretrained weights (no directory given)",
                spec.model_id
            )))
        }
    };
    let order = model.label_order.clone();
    for l in &train_classes {
        if !order.contains(l) {
            return Err(TrainError::Config(format!("class {l} not in label_order")));
        }
    }
    let encode = |docs: &[crimeclass_core::Complaint],
                  labels: &[CategoryLabel]|
     -> Result<Vec<Example>, TrainError> {
        docs.iter()
            .zip(labels)
            .map(|(c, l)| {
                let enc = model
                    .text_encoder()
                    .encode(&c.text)
                    .map_err(ModelError::from)?;
                let used = enc.used();
                Ok(Example {
                    ids: enc.ids[..used].to_vec(),
                    label: order.iter().position(|o| o == l).expect("checked") as u32,
                })
            })
            .collect()
    };
    let train_set = encode(&split.train, &train_labels)?;
    let val_set = encode(&split.validation, &val_labels)?;
    let pad = model.text_encoder().pad_id();

    let mut optimizer = (options.optimizer)(model.varmap().all_vars(), config)?;
    let mut dropout = Dropout::new(
        model.encoder_config().hidden_dropout_prob,
        config.seed ^ 0x5eed,
    );
    let batches_per_epoch = train_set.len().div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.max_epochs;
    let mut step = 0usize;
    let mut snapshot: Option<Vec<(Var, Tensor)>> = None;

    let history = run_training_loop(
        config.max_epochs,
        config.early_stopping_patience,
        config.early_stopping_metric,
        |epoch| -> Result<EpochOutcome, TrainError> {
            let mut order_idx: Vec<usize> = (0..train_set.len()).collect();
            order_idx.shuffle(&mut ChaCha8Rng::seed_from_u64(
                config.seed.wrapping_add(epoch as u64),
            ));
            let mut loss_sum = 0.0;
            for (batch, chunk) in order_idx.chunks(config.batch_size).enumerate() {
                let rows: Vec<&[u32]> =
                    chunk.iter().map(|&i| train_set[i].ids.as_slice()).collect();
                let (ids, mask) = pad_batch(&rows, pad);
                let targets = Tensor::new(
                    chunk
                        .iter()
                        .map(|&i| train_set[i].label)
                        .collect::<Vec<u32>>(),
                    &candle_core::Device::Cpu,
                )?;
                let logits = model.network().forward(&ids, &mask, Some(&mut dropout))?;
                let loss = candle_nn::loss::cross_entropy(&logits, &targets)?;
                let value = loss.to_scalar::<f32>()?;
                let lr = config.learning_rate_at(step, total_steps);
                if !value.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        batch: batch + 1,
                        learning_rate: lr,
                        loss: value,
                    });
                }
                optimizer.set_learning_rate(lr);
                optimizer.step(&loss)?;
                loss_sum += value as f64 * chunk.len() as f64;
                step += 1;
            }
            let mut pairs = Vec::with_capacity(val_set.len());
            for chunk in val_set.chunks(64) {
                let rows: Vec<&[u32]> = chunk.iter().map(|e| e.ids.as_slice()).collect();
                let (ids, mask) = pad_batch(&rows, pad);
                let predicted = argmax_rows(&model.network().forward(&ids, &mask, None)?)?;
                for (e, p) in chunk.iter().zip(predicted) {
                    pairs.push((order[e.label as usize], order[p as usize]));
                }
            }
            let report = evaluate_pairs("validation", &pairs, Averaging::Macro)
                .map_err(|e| TrainError::Precondition(e.to_string()))?;
            let outcome = EpochOutcome {
                train_loss: loss_sum / train_set.len() as f64,
                validation_accuracy: report.aggregate.accuracy,
                validation_f1: report.macro_avg.f1,
            };
            log::info!(
                "epoch {epoch}: loss {:.4} val_acc {:.4} val_f1 {:.4}",
                outcome.train_loss,
                outcome.validation_accuracy,
                outcome.validation_f1
            );
            Ok(outcome)
        },
        |_| -> Result<(), TrainError> {
            let vars = model.varmap().all_vars();
            snapshot = Some(
                vars.into_iter()
                    .map(|v| {
                        let t = v.as_tensor().copy()?;
                        Ok((v, t))
                    })
                    .collect::<candle_core::Result<_>>()?,
            );
            Ok(())
        },
    )?;
    if let Some(best) = snapshot {
        for (var, value) in best {
            var.set(&value)?;
        }
    }
    model.finish_training(split, config.clone(), history);
    Ok(model)
}
