//! Hyperparameter grid search over learning rate, batch size and sequence
//! length.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crimeclass_core::DatasetSplit;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::registry::{ModelSpec, SEQUENCE_LENGTHS};
use crate::train::{
    train, TrainError, TrainOptions, TrainingConfig, TrainingHistory, BATCH_SIZES, LEARNING_RATES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    /// Empty keeps the spec's own length.
    #[serde(default)]
    pub max_sequence_lengths: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            learning_rates: LEARNING_RATES.to_vec(),
            batch_sizes: BATCH_SIZES.to_vec(),
            max_sequence_lengths: SEQUENCE_LENGTHS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_sequence_length: usize,
}

impl Grid {
    pub fn single(learning_rate: f64, batch_size: usize) -> Self {
        Self {
            learning_rates: vec![learning_rate],
            batch_sizes: vec![batch_size],
            max_sequence_lengths: Vec::new(),
        }
    }

    /// Cartesian product in lr-major order.
    pub fn points(&self, default_length: usize) -> Vec<GridPoint> {
        let lengths = if self.max_sequence_lengths.is_empty() {
            vec![default_length]
        } else {
            self.max_sequence_lengths.clone()
        };
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rates {
            for &batch_size in &self.batch_sizes {
                for &max_sequence_length in &lengths {
                    out.push(GridPoint {
                        learning_rate,
                        batch_size,
                        max_sequence_length,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PointStatus {
    Completed {
        metric: f64,
        history: TrainingHistory,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: GridPoint,
    pub config: TrainingConfig,
    #[serde(flatten)]
    pub status: PointStatus,
}

impl PointResult {
    pub fn metric(&self) -> Option<f64> {
        match &self.status {
            PointStatus::Completed { metric, .. } => Some(*metric),
            PointStatus::Failed { .. } => None,
        }
    }
}

pub struct GridOutcome {
    pub best_config: TrainingConfig,
    pub best_point: GridPoint,
    pub best_model: ClassifierModel,
    /// One entry per grid point, in grid order.
    pub results: Vec<PointResult>,
}

/// True when `a` should be preferred over `b`: higher metric, then smaller
/// learning rate, smaller batch, shorter sequence.
fn better(a: (f64, &GridPoint), b: (f64, &GridPoint)) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    let key = |p: &GridPoint| (p.learning_rate, p.batch_size, p.max_sequence_length);
    key(a.1).partial_cmp(&key(b.1)) == Some(std::cmp::Ordering::Less)
}

/// Train one model per grid point with `base` for everything the grid does
/// not vary. Up to `workers` points train concurrently.
pub fn grid_search(
    split: &DatasetSplit,
    spec: &ModelSpec,
    grid: &Grid,
    base: &TrainingConfig,
    options: &TrainOptions,
    workers: usize,
) -> Result<GridOutcome, TrainError> {
    let points = grid.points(spec.max_sequence_length);
    if points.is_empty() {
        return Err(TrainError::Config("grid has no points".into()));
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<(PointResult, Option<ClassifierModel>)>>> =
        points.iter().map(|_| Mutex::new(None)).collect();
    let run = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(point) = points.get(i) else { break };
        let config = TrainingConfig {
            learning_rate: point.learning_rate,
            batch_size: point.batch_size,
            ..base.clone()
        };
        let point_spec = spec
            .clone()
            .with_max_sequence_length(point.max_sequence_length);
        log::info!(
            "grid point {}/{}: lr {} batch {} length {}",
            i + 1,
            points.len(),
            point.learning_rate,
            point.batch_size,
            point.max_sequence_length
        );
        let (status, model) = match train(split, &point_spec, &config, options) {
            Ok(model) => {
                let history = model.history.clone().expect("trained models carry history");
                (
                    PointStatus::Completed {
                        metric: history.best_metric,
                        history,
                    },
                    Some(model),
                )
            }
            Err(e) => {
                log::warn!("grid point {} failed: {e}", i + 1);
                (
                    PointStatus::Failed {
                        error: e.to_string(),
                    },
                    None,
                )
            }
        };
        *slots[i].lock().expect("slot lock") = Some((
            PointResult {
                point: *point,
                config,
                status,
            },
            model,
        ));
    };
    std::thread::scope(|s| {
        for _ in 1..workers.clamp(1, points.len()) {
            s.spawn(run);
        }
        run();
    });

    let mut results = Vec::with_capacity(points.len());
    let mut best: Option<(usize, ClassifierModel)> = None;
    for slot in slots {
        let (result, model) = slot
            .into_inner()
            .expect("slot lock")
            .expect("every point ran");
        if let (Some(metric), Some(model)) = (result.metric(), model) {
            let replace = match &best {
                None => true,
                Some((b, _)) => {
                    let prev: &PointResult = &results[*b];
                    better(
                        (metric, &result.point),
                        (prev.metric().expect("completed"), &prev.point),
                    )
                }
            };
            if replace {
                best = Some((results.len(), model));
            }
        }
        results.push(result);
    }
    let Some((index, best_model)) = best else {
        let errors = results
            .iter()
            .filter_map(|r| match &r.status {
                PointStatus::Failed { error } => Some(error.clone()),
                PointStatus::Completed { .. } => None,
            })
            .collect();
        return Err(TrainError::AllGridPointsFailed(errors));
    };
    Ok(GridOutcome {
        best_config: results[index].config.clone(),
        best_point: results[index].point,
        best_model,
        results,
    })
}
