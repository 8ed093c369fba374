use std::time::Instant;

use crimeclass_baselines::{BaselineConfig, BaselineKind, BaselineModel};
use crimeclass_core::smoke::{prepare, SmokeConfig};
use crimeclass_core::TextClassifier;

fn accuracy(model: &BaselineModel, docs: &[crimeclass_core::Complaint]) -> f64 {
    let hits = docs
        .iter()
        .filter(|c| model.predict(&c.text).unwrap().label == c.category.unwrap())
        .count();
    hits as f64 / docs.len() as f64
}

fn config(reduced_dimension: usize) -> BaselineConfig {
    BaselineConfig {
        reduced_dimension,
        ..Default::default()
    }
}

#[test]
fn every_baseline_learns_the_separable_corpus() {
    let split = prepare(
        &SmokeConfig {
            classes: 14,
            per_class: 60,
            ..Default::default()
        },
        0.3,
    )
    .unwrap();
    for kind in BaselineKind::ALL {
        let start = Instant::now();
        let model = BaselineModel::fit(&split.train, kind, config(60)).unwrap();
        let acc = accuracy(&model, &split.test);
        eprintln!("{kind:?}: held-out accuracy {acc:.3} in {:?}", start.elapsed());
        assert!(acc >= 1.0 / 14.0, "{kind:?} below chance");
        if kind == BaselineKind::GradientBoostedTrees {
            assert!(acc >= 0.85, "gradient boosting {acc}");
        }
        assert!(model.leaked_ids(split.test.iter().map(|c| c.id.as_str())).is_empty());
    }
}

#[test]
fn refit_is_deterministic() {
    let split = prepare(&SmokeConfig::default(), 0.3).unwrap();
    for kind in [BaselineKind::RandomForest, BaselineKind::GradientBoostedTrees] {
        let a = BaselineModel::fit(&split.train, kind, config(30)).unwrap();
        let b = BaselineModel::fit(&split.train, kind, config(30)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn refitting_on_more_data_changes_fingerprint() {
    let split = prepare(&SmokeConfig::default(), 0.3).unwrap();
    let a = BaselineModel::fit(&split.train, BaselineKind::KNearestNeighbors, config(30)).unwrap();
    let mut both = split.train.clone();
    both.extend(split.validation.iter().cloned());
    let b = BaselineModel::fit(&both, BaselineKind::KNearestNeighbors, config(30)).unwrap();
    assert_ne!(a.fingerprint, b.fingerprint);
    assert!(!b.leaked_ids(split.validation.iter().map(|c| c.id.as_str())).is_empty());
}
