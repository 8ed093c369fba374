use std::sync::Arc;

use candle_core::{Tensor, Var};
use crimeclass_classifiers::grid::{grid_search, Grid, PointStatus};
use crimeclass_classifiers::train::{adamw, OptimizerFactory, StepOptimizer};
use crimeclass_classifiers::{lookup, TrainError, TrainOptions, TrainingConfig};
use crimeclass_core::smoke::{prepare, SmokeConfig};
use crimeclass_core::DatasetSplit;

/// Sets every weight to NaN on the first step at the top learning rate.
struct Exploding {
    vars: Vec<Var>,
}

impl StepOptimizer for Exploding {
    fn step(&mut self, _loss: &Tensor) -> candle_core::Result<()> {
        for v in &self.vars {
            let nan = (v.as_tensor().zeros_like()? + f64::NAN)?;
            v.set(&nan)?;
        }
        Ok(())
    }

    fn set_learning_rate(&mut self, _lr: f64) {}
}

fn exploding_at_top_lr() -> OptimizerFactory {
    let normal = adamw();
    Arc::new(move |vars, cfg: &TrainingConfig| {
        if cfg.learning_rate >= 3e-5 {
            Ok(Box::new(Exploding { vars }) as Box<dyn StepOptimizer>)
        } else {
            normal(vars, cfg)
        }
    })
}

fn split() -> DatasetSplit {
    let cfg = SmokeConfig {
        classes: 3,
        per_class: 20,
        ..Default::default()
    };
    prepare(&cfg, 0.4).unwrap()
}

fn base() -> TrainingConfig {
    TrainingConfig {
        max_epochs: 1,
        ..Default::default()
    }
}

#[test]
fn diverging_point_is_recorded_not_fatal() {
    let spec = lookup("bert").unwrap().smoke();
    let grid = Grid {
        learning_rates: vec![1e-5, 3e-5],
        batch_sizes: vec![16],
        max_sequence_lengths: vec![],
    };
    let options = TrainOptions {
        optimizer: exploding_at_top_lr(),
        pretrained_dir: None,
    };
    let out = grid_search(&split(), &spec, &grid, &base(), &options, 1).unwrap();
    assert_eq!(out.results.len(), 2);
    assert!(matches!(
        out.results[0].status,
        PointStatus::Completed { .. }
    ));
    match &out.results[1].status {
        PointStatus::Failed { error } => assert!(error.contains("non-finite"), "{error}"),
        other => panic!("expected failure, got {other:?}"),
    }
    assert_eq!(out.best_config.learning_rate, 1e-5);
}

#[test]
fn all_failed_is_an_error() {
    let spec = lookup("bert").unwrap().smoke();
    let options = TrainOptions {
        optimizer: exploding_at_top_lr(),
        pretrained_dir: None,
    };
    let err = grid_search(
        &split(),
        &spec,
        &Grid::single(3e-5, 8),
        &base(),
        &options,
        1,
    )
    .err()
    .unwrap();
    assert!(matches!(err, TrainError::AllGridPointsFailed(ref e) if e.len() == 1));
}

#[test]
fn single_point_and_workers() {
    let spec = lookup("roberta").unwrap().smoke();
    let out = grid_search(
        &split(),
        &spec,
        &Grid::single(2e-5, 32),
        &base(),
        &TrainOptions::default(),
        1,
    )
    .unwrap();
    assert_eq!(out.results.len(), 1);
    assert_eq!(out.best_config.batch_size, 32);

    let grid = Grid {
        learning_rates: vec![2e-5],
        batch_sizes: vec![16, 32],
        max_sequence_lengths: vec![128, 256],
    };
    let serial = grid_search(&split(), &spec, &grid, &base(), &TrainOptions::default(), 1).unwrap();
    let parallel =
        grid_search(&split(), &spec, &grid, &base(), &TrainOptions::default(), 3).unwrap();
    assert_eq!(serial.results.len(), 4);
    let metrics = |o: &crimeclass_classifiers::grid::GridOutcome| -> Vec<Option<f64>> {
        o.results.iter().map(|r| r.metric()).collect()
    };
    assert_eq!(metrics(&serial), metrics(&parallel));
    assert_eq!(serial.best_point, parallel.best_point);
    assert_eq!(
        parallel.best_model.spec.max_sequence_length,
        parallel.best_point.max_sequence_length
    );
}
