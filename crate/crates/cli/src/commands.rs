//! Stage operations shared by the individual subcommands and the pipeline.
//! Each reads its inputs from disk and writes its artifacts into a
//! directory or file it is given.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crimeclass_baselines::{BaselineConfig, BaselineKind, BaselineModel};
use crimeclass_classifiers::grid::{grid_search, Grid};
use crimeclass_classifiers::{train, ModelSpec, TrainOptions, TrainingConfig};
use crimeclass_core::anonymizer::{anonymize_corpus, default_factory, AnonymizerConfig, RedactionStats};
use crimeclass_core::augmenter::{
    augment_corpus, AugmentationReport, AugmenterConfig, GeneratorClient, HashedTokenEmbedder, HttpGenerator,
    MultiplierPolicy, RetryPolicy, ShuffleParaphraser, TargetDistribution,
};
use crimeclass_core::corpus::{
    class_counts, clean, ingest_file, read_complaints, split, standardize_labels, write_complaints, CleaningReport,
    IngestConfig,
};
use crimeclass_core::evaluator::{compare, evaluate, Averaging, ComparisonTable, EvaluationReport};
use crimeclass_core::{Complaint, DatasetSplit, DropList};
use serde::{Deserialize, Serialize};

pub const COMPLAINTS_FILE: &str = "complaints.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const GRID_RESULTS_FILE: &str = "grid_results.json";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&raw).with_context(|| format!("parsing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Parse a delimited file and write it in the corpus format.
pub fn ingest_to(input: &Path, config: &IngestConfig, output: &Path) -> Result<CleaningReport> {
    let (complaints, report) =
        ingest_file(input, config).with_context(|| format!("ingesting {}", input.display()))?;
    write_complaints(output, &complaints)?;
    Ok(report)
}

/// Standardize labels, then drop empty and duplicate texts.
pub fn clean_to(input: &Path, drop: &DropList, output: &Path) -> Result<CleaningReport> {
    let complaints = read_complaints(input)?;
    let (labeled, mut report) = standardize_labels(complaints, drop)?;
    let (cleaned, dedup) = clean(labeled);
    report.merge(&dedup);
    write_complaints(output, &cleaned)?;
    Ok(report)
}

/// Anonymize every complaint. Failed items are dropped and reported; span
/// details are never written, since their surfaces are the PII itself.
pub fn anonymize_to(input: &Path, config: &AnonymizerConfig, output: &Path) -> Result<RedactionStats> {
    let complaints = read_complaints(input)?;
    let batch = anonymize_corpus(complaints, config, &default_factory())?;
    for e in &batch.errors {
        log::warn!("{e}");
    }
    write_complaints(output, &batch.complaints)?;
    Ok(batch.stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSettings {
    pub validation_fraction: f64,
    /// Share of each class held out as test when no separate test file is
    /// given.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            validation_fraction: 0.2,
            test_fraction: 0.15,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub classes: usize,
}

/// Stratified train/validation split, with test taken from `test_input`
/// or held out from `input`.
pub fn split_to(input: &Path, test_input: Option<&Path>, settings: SplitSettings, output: &Path) -> Result<SplitSummary> {
    let complaints = read_complaints(input)?;
    let (pool, test) = match test_input {
        Some(path) => (complaints, read_complaints(path)?),
        None => {
            let outer = split(&complaints, settings.test_fraction, settings.seed)?;
            (outer.train, outer.validation)
        }
    };
    let inner = split(&pool, settings.validation_fraction, settings.seed.wrapping_add(1))?;
    let out = inner.with_test(test);
    out.check()?;
    out.save(output)?;
    Ok(SplitSummary {
        train: out.train.len(),
        validation: out.validation.len(),
        test: out.test.len(),
        classes: class_counts(&out.train).len(),
    })
}

/// Where paraphrase candidates come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSettings {
    /// Offline word-order variants; for smoke runs and tests.
    Offline,
    Http {
        endpoint: String,
        #[serde(default = "default_generator_model")]
        model_id: String,
        #[serde(default = "one")]
        parallelism: usize,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

fn default_generator_model() -> String {
    crimeclass_core::augmenter::generator::DEFAULT_GENERATOR_MODEL.into()
}

fn one() -> usize {
    1
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        Self::Offline
    }
}

impl GeneratorSettings {
    pub fn client(&self) -> Result<Box<dyn GeneratorClient>> {
        Ok(match self {
            Self::Offline => Box::new(ShuffleParaphraser { parallelism: 1 }),
            Self::Http {
                endpoint,
                model_id,
                parallelism,
                retry,
            } => Box::new(HttpGenerator::new(endpoint, model_id, retry.clone())?.with_parallelism(*parallelism)),
        })
    }
}

/// Per-class augmentation targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSettings {
    /// The reference augmented class counts.
    Reference,
    /// Grow every class by `factor`, capped.
    Multiplier { factor: f64, cap: usize },
    /// JSON object mapping label names to counts.
    File { path: PathBuf },
}

impl Default for TargetSettings {
    fn default() -> Self {
        Self::Multiplier { factor: 1.5, cap: 100_000 }
    }
}

impl TargetSettings {
    pub fn resolve(&self, train: &[Complaint]) -> Result<TargetDistribution> {
        Ok(match self {
            Self::Reference => TargetDistribution::reference(),
            Self::Multiplier { factor, cap } => TargetDistribution::from_policy(
                &class_counts(train),
                MultiplierPolicy {
                    factor: *factor,
                    cap: *cap,
                },
            ),
            Self::File { path } => {
                let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                TargetDistribution::from_json(&raw)?
            }
        })
    }
}

/// Augment the training partition. The output directory holds the full
/// split (validation and test copied unchanged), the report and every
/// judged candidate.
pub fn augment_to(
    split_dir: &Path,
    targets: &TargetSettings,
    generator: &GeneratorSettings,
    config: &AugmenterConfig,
    output: &Path,
) -> Result<AugmentationReport> {
    let data = DatasetSplit::load(split_dir)?;
    let targets = targets.resolve(&data.train)?;
    let client = generator.client()?;
    let embedder = HashedTokenEmbedder::default();
    let out = augment_corpus(&data, &targets, client.as_ref(), &embedder, &default_factory(), config)?;
    let mut grown = data;
    grown.train.extend(out.additions);
    grown.check()?;
    grown.save(output)?;
    let mut lines = String::new();
    for c in &out.candidates {
        lines.push_str(&serde_json::to_string(c)?);
        lines.push('\n');
    }
    fs::write(output.join(CANDIDATES_FILE), lines)?;
    write_json(&output.join(REPORT_FILE), &out.report)?;
    Ok(out.report)
}

fn options_for(pretrained_dir: Option<&Path>) -> TrainOptions {
    TrainOptions {
        pretrained_dir: pretrained_dir.map(Path::to_path_buf),
        ..Default::default()
    }
}

/// Fine-tune one model and save its best checkpoint.
pub fn train_to(
    split_dir: &Path,
    spec: &ModelSpec,
    config: &TrainingConfig,
    pretrained_dir: Option<&Path>,
    output: &Path,
) -> Result<crimeclass_classifiers::TrainingHistory> {
    let data = DatasetSplit::load(split_dir)?;
    let model = train(&data, spec, config, &options_for(pretrained_dir))?;
    model.save(output)?;
    model.history.clone().context("trained model has no history")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub best_config: TrainingConfig,
    pub best_point: crimeclass_classifiers::grid::GridPoint,
    pub results: Vec<crimeclass_classifiers::grid::PointResult>,
}

/// Grid search; the best model is saved to `output` next to every point's
/// result.
pub fn grid_to(
    split_dir: &Path,
    spec: &ModelSpec,
    grid: &Grid,
    base: &TrainingConfig,
    workers: usize,
    pretrained_dir: Option<&Path>,
    output: &Path,
) -> Result<GridSummary> {
    let data = DatasetSplit::load(split_dir)?;
    let outcome = grid_search(&data, spec, grid, base, &options_for(pretrained_dir), workers)?;
    outcome.best_model.save(output)?;
    let summary = GridSummary {
        best_config: outcome.best_config,
        best_point: outcome.best_point,
        results: outcome.results,
    };
    write_json(&output.join(GRID_RESULTS_FILE), &summary)?;
    Ok(summary)
}

/// Fit one classical pipeline on the training partition.
pub fn baseline_to(split_dir: &Path, kind: BaselineKind, config: &BaselineConfig, output: &Path) -> Result<()> {
    let data = DatasetSplit::load(split_dir)?;
    let model = BaselineModel::fit(&data.train, kind, config.clone())?;
    ensure_dir(output)?;
    model.save(output)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

/// Score a saved model (transformer or baseline) on one partition.
pub fn evaluate_model(model_dir: &Path, split_dir: &Path, partition: Partition, name: &str) -> Result<EvaluationReport> {
    let model = crimeclass_service::models::load(model_dir).map_err(anyhow::Error::msg)?;
    let data = DatasetSplit::load(split_dir)?;
    let items = match partition {
        Partition::Train => &data.train,
        Partition::Validation => &data.validation,
        Partition::Test => &data.test,
    };
    if items.is_empty() {
        bail!("{partition:?} partition of {} is empty", split_dir.display());
    }
    let texts: Vec<&str> = items.iter().map(|c| c.text.as_str()).collect();
    let predictions = model.predict_batch(&texts)?;
    let pairs = items
        .iter()
        .zip(predictions)
        .map(|(c, p)| {
            c.category
                .map(|g| (g, p))
                .with_context(|| format!("complaint {} has no category", c.id))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(evaluate(name, &pairs, Averaging::Weighted)?)
}

/// Write a report as JSON plus a per-class markdown table next to it.
pub fn write_report(path: &Path, report: &EvaluationReport) -> Result<()> {
    write_json(path, report)?;
    fs::write(path.with_extension("md"), report.render_per_class_markdown())?;
    Ok(())
}

/// Comparison table over saved reports, in markdown and CSV.
pub fn compare_reports(reports: &[PathBuf], digits: usize) -> Result<(ComparisonTable, String, String)> {
    let loaded = reports
        .iter()
        .map(|p| read_json::<EvaluationReport>(p))
        .collect::<Result<Vec<_>>>()?;
    let table = compare(&loaded)?;
    let md = table.to_markdown(digits);
    let csv = table.to_delimited(',', digits);
    Ok((table, md, csv))
}

/// Class counts of a corpus file, keyed by label name.
pub fn label_histogram(path: &Path) -> Result<BTreeMap<String, usize>> {
    Ok(class_counts(&read_complaints(path)?)
        .into_iter()
        .map(|(l, n)| (l.to_string(), n))
        .collect())
}
