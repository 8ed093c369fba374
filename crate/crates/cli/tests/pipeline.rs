use std::fs;
use std::path::Path;
use std::process::Command;

use crimeclass_cli::pipeline::{Manifest, Pipeline, PipelineConfig, PipelineError, StageStatus, MANIFEST_FILE};

const STAGES: [&str; 9] = [
    "ingest",
    "clean",
    "anonymize",
    "split",
    "augment",
    "train",
    "baselines",
    "evaluate",
    "compare",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crimeclass"))
}

fn write_corpus(dir: &Path) {
    let status = bin()
        .args(["smoke", "--classes", "3", "--per-class", "40", "-o"])
        .arg(dir.join("complaints.csv"))
        .status()
        .unwrap();
    assert!(status.success());
}

fn config(extra: &str) -> String {
    format!(
        "[data]\ninput = \"complaints.csv\"\n\
         [augment.targets]\nkind = \"multiplier\"\nfactor = 1.2\ncap = 500\n\
         [model]\nname = \"roberta\"\nsmoke = true\n\
         [training]\nlearning_rate = 3e-5\nbatch_size = 8\nmax_epochs = 1\nearly_stopping_patience = 1\n\
         [baselines.options]\nn_estimators = 5\nreduced_dimension = 16\n{extra}"
    )
}

fn run(dir: &Path, raw: &str) -> Result<Manifest, PipelineError> {
    let path = dir.join("pipeline.toml");
    fs::write(&path, raw).unwrap();
    let cfg = PipelineConfig::load(&path)?;
    Pipeline::new(cfg).run().map(|s| s.manifest)
}

fn statuses(m: &Manifest) -> Vec<(String, StageStatus)> {
    m.stages.iter().map(|s| (s.stage.clone(), s.status)).collect()
}

#[test]
fn full_run_then_rerun_skips_everything() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let first = run(dir.path(), &config("")).unwrap();
    let names: Vec<&str> = first.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, STAGES);
    assert!(first.stages.iter().all(|s| s.status == StageStatus::Ran));

    let out = dir.path().join("artifacts");
    for stage in STAGES {
        assert!(out.join(stage).join("stage.json").is_file(), "{stage}");
    }
    assert!(out.join("compare/comparison.md").is_file());
    assert!(out.join("evaluate/roberta-smoke.json").is_file());
    let manifest: Manifest = serde_json::from_slice(&fs::read(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.data.len(), 1);
    assert_eq!(manifest.config_fingerprint, first.config_fingerprint);

    let second = run(dir.path(), &config("")).unwrap();
    assert!(second.stages.iter().all(|s| s.status == StageStatus::Skipped), "{:?}", statuses(&second));
    for (a, b) in first.stages.iter().zip(&second.stages) {
        assert_eq!(a.output_fingerprint, b.output_fingerprint);
    }

    // a baseline-only change leaves upstream and the transformer untouched
    let third = run(dir.path(), &config("k_neighbors = 3\n")).unwrap();
    let ran: Vec<String> = third
        .stages
        .iter()
        .filter(|s| s.status == StageStatus::Ran)
        .map(|s| s.stage.clone())
        .collect();
    assert_eq!(ran, ["baselines", "evaluate", "compare"]);

    // edited artifacts are detected and rebuilt
    fs::write(out.join("split/train.csv"), "id,text\n").unwrap();
    let fourth = run(dir.path(), &config("k_neighbors = 3\n")).unwrap();
    assert_eq!(fourth.stages[3].status, StageStatus::Ran);
    assert_eq!(fourth.stages[4].status, StageStatus::Skipped);
}

#[test]
fn missing_model_name_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let raw = config("").replace("name = \"roberta\"\n", "");
    assert!(matches!(run(dir.path(), &raw), Err(PipelineError::Schema(_))));
    assert!(!dir.path().join("artifacts").exists());

    let path = dir.path().join("pipeline.toml");
    let output = bin().args(["pipeline", "run"]).arg(&path).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("name"));
}

#[test]
fn failure_names_the_stage_and_keeps_earlier_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    run(dir.path(), &config("")).unwrap();
    let out = dir.path().join("artifacts");
    let before = fs::read(out.join("train/stage.json")).unwrap();
    let old_baseline = fs::read(out.join("baselines/stage.json")).unwrap();

    // wider than the vocabulary: the SVD step refuses it
    let err = run(dir.path(), &config("").replace("reduced_dimension = 16", "reduced_dimension = 5000")).unwrap_err();
    match &err {
        PipelineError::Stage { stage, .. } => assert_eq!(*stage, "baselines"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains("baselines"));
    assert_eq!(fs::read(out.join("train/stage.json")).unwrap(), before);
    assert_eq!(fs::read(out.join("baselines/stage.json")).unwrap(), old_baseline);
    assert!(!out.join(".baselines.partial").exists());

    // going back to the old config reuses everything again
    let again = run(dir.path(), &config("")).unwrap();
    assert!(again.stages.iter().all(|s| s.status == StageStatus::Skipped));
}

#[test]
fn separate_test_file_is_used_as_the_test_partition() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let status = bin()
        .args(["smoke", "--classes", "3", "--per-class", "10", "--seed", "99", "-o"])
        .arg(dir.path().join("test.csv"))
        .status()
        .unwrap();
    assert!(status.success());
    let raw = config("").replace(
        "input = \"complaints.csv\"\n",
        "input = \"complaints.csv\"\ntest_input = \"test.csv\"\n",
    );
    let manifest = run(dir.path(), &raw).unwrap();
    assert_eq!(manifest.data.len(), 2);
    let test = crimeclass_core::corpus::read_complaints(&dir.path().join("artifacts/split/test.csv")).unwrap();
    assert_eq!(test.len(), 30);
    assert!(test.iter().all(|c| c.id.starts_with("test-")));
}
