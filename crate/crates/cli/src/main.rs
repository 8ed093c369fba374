use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use crimeclass_baselines::{BaselineConfig, BaselineKind};
use crimeclass_classifiers::grid::Grid;
use crimeclass_classifiers::{lookup, ModelSpec, TrainingConfig};
use crimeclass_cli::commands::{self, GeneratorSettings, Partition, SplitSettings, TargetSettings};
use crimeclass_cli::pipeline::{Pipeline, PipelineConfig, PipelineError};
use crimeclass_core::anonymizer::AnonymizerConfig;
use crimeclass_core::augmenter::AugmenterConfig;
use crimeclass_core::corpus::IngestConfig;
use crimeclass_core::labels::LABEL_MAP;
use crimeclass_core::smoke::{generate, SmokeConfig, SmokeKind};
use crimeclass_core::DropList;
use crimeclass_service::ServiceConfig;
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "crimeclass", version, about = "Cybercrime complaint classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a delimited file into the corpus format.
    Ingest {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "text")]
        text_column: String,
        #[arg(long, default_value = "label")]
        label_column: String,
        #[arg(long)]
        id_column: Option<String>,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Standardize labels, drop listed classes, empty and duplicate texts.
    Clean {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// JSON drop-list; defaults to the reference one.
        #[arg(long)]
        drop_list: Option<PathBuf>,
    },
    /// Redact personal information and normalize text.
    Anonymize {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Stratified train/validation/test split into a directory.
    Split {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        test_input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        validation_fraction: f64,
        #[arg(long, default_value_t = 0.15)]
        test_fraction: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Grow the training partition with gated paraphrases.
    Augment {
        split_dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// JSON with optional `targets`, `generator` and `options` keys.
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Fine-tune one registry model.
    Train {
        split_dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// JSON training config; defaults apply otherwise.
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Grid search over learning rate, batch size and sequence length.
    Grid {
        split_dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// JSON with optional `grid` and `training` keys.
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Fit a classical TF-IDF baseline.
    Baseline {
        split_dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// gradient_boosted_trees, random_forest, adaptive_boosting or k_nearest_neighbors.
        #[arg(long)]
        kind: BaselineKind,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Score a saved model on one partition.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        split_dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        partition: Partition,
        /// Name shown in reports; defaults to the model directory name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Side-by-side table over evaluation reports.
    Compare {
        reports: Vec<PathBuf>,
        #[arg(long, default_value_t = 4)]
        digits: usize,
        /// Write markdown and CSV with this path stem.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Classify texts given as arguments or one per line on stdin.
    Predict {
        #[arg(long)]
        model: PathBuf,
        texts: Vec<String>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Accept submissions without redacting them.
        #[arg(long)]
        no_privacy_mode: bool,
        /// TOML service config; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Submission store (JSON lines).
        #[arg(long)]
        storage: Option<PathBuf>,
    },
    /// Run or describe the end-to-end pipeline.
    Pipeline {
        #[command(subcommand)]
        action: PipelineAction,
    },
    /// Write a synthetic raw complaint file for trying the tools.
    Smoke {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 80)]
        per_class: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_parser = parse_kind, default_value = "separable")]
        kind: SmokeKind,
    },
}

#[derive(Subcommand)]
enum PipelineAction {
    /// Run every stage, skipping those whose inputs are unchanged.
    Run { config: PathBuf },
    /// Print a complete example config with all defaults.
    Schema,
}

#[derive(Args)]
struct ModelArgs {
    /// bert, roberta, hingbert or hingroberta.
    #[arg(long)]
    model: String,
    /// Desk-scale stand-in encoder; no pretrained weights needed.
    #[arg(long)]
    smoke: bool,
    #[arg(long)]
    pretrained_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    max_sequence_length: usize,
}

impl ModelArgs {
    fn spec(&self) -> Result<ModelSpec> {
        let spec = lookup(&self.model)
            .with_context(|| format!("unknown model {:?}", self.model))?
            .with_max_sequence_length(self.max_sequence_length);
        let spec = if self.smoke { spec.smoke() } else { spec };
        spec.validate().map_err(anyhow::Error::msg)?;
        Ok(spec)
    }

    fn pretrained(&self) -> Option<&Path> {
        self.pretrained_dir.as_deref().filter(|_| !self.smoke)
    }
}

#[derive(Args)]
struct ConfigArg {
    /// JSON config file.
    #[arg(long = "config")]
    path: Option<PathBuf>,
}

impl ConfigArg {
    fn load<T: DeserializeOwned + Default>(&self) -> Result<T> {
        match &self.path {
            Some(p) => commands::read_json(p),
            None => Ok(T::default()),
        }
    }
}

#[derive(Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AugmentFile {
    targets: TargetSettings,
    generator: GeneratorSettings,
    options: AugmenterConfig,
}

#[derive(Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GridFile {
    grid: Grid,
    training: TrainingConfig,
}

fn parse_kind(s: &str) -> Result<SmokeKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| "expected separable, order_overlap or spelling_overlap".to_string())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_smoke(output: &Path, cfg: &SmokeConfig) -> Result<usize> {
    let items = generate(cfg)?;
    let mut w = csv::Writer::from_path(output).with_context(|| format!("creating {}", output.display()))?;
    w.write_record(["id", "text", "label"])?;
    for c in &items {
        let label = c.category.context("smoke complaint without label")?;
        let raw = LABEL_MAP.iter().find(|(_, l)| *l == label).map(|(r, _)| *r).unwrap_or(label.name());
        w.write_record([c.id.as_str(), c.text.as_str(), raw])?;
    }
    w.flush()?;
    Ok(items.len())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            input,
            output,
            text_column,
            label_column,
            id_column,
            delimiter,
        } => {
            anyhow::ensure!(delimiter.is_ascii(), "delimiter must be ASCII");
            let cfg = IngestConfig {
                text_column,
                label_column,
                id_column,
                delimiter: delimiter as u8,
            };
            print_json(&commands::ingest_to(&input, &cfg, &output)?)
        }
        Command::Clean {
            input,
            output,
            drop_list,
        } => {
            let drop = match drop_list {
                Some(p) => commands::read_json(&p)?,
                None => DropList::reference(),
            };
            print_json(&commands::clean_to(&input, &drop, &output)?)
        }
        Command::Anonymize { input, output, config } => {
            let cfg: AnonymizerConfig = config.load()?;
            print_json(&commands::anonymize_to(&input, &cfg, &output)?)
        }
        Command::Split {
            input,
            output,
            test_input,
            validation_fraction,
            test_fraction,
            seed,
        } => {
            let settings = SplitSettings {
                validation_fraction,
                test_fraction,
                seed,
            };
            print_json(&commands::split_to(&input, test_input.as_deref(), settings, &output)?)
        }
        Command::Augment {
            split_dir,
            output,
            config,
        } => {
            let f: AugmentFile = config.load()?;
            print_json(&commands::augment_to(&split_dir, &f.targets, &f.generator, &f.options, &output)?)
        }
        Command::Train {
            split_dir,
            output,
            model,
            config,
        } => {
            let cfg: TrainingConfig = config.load()?;
            cfg.validate().map_err(anyhow::Error::msg)?;
            let history = commands::train_to(&split_dir, &model.spec()?, &cfg, model.pretrained(), &output)?;
            print_json(&history)
        }
        Command::Grid {
            split_dir,
            output,
            model,
            config,
            workers,
        } => {
            let f: GridFile = config.load()?;
            let summary = commands::grid_to(&split_dir, &model.spec()?, &f.grid, &f.training, workers, model.pretrained(), &output)?;
            print_json(&serde_json::json!({"best_config": summary.best_config, "best_point": summary.best_point}))
        }
        Command::Baseline {
            split_dir,
            output,
            kind,
            config,
        } => {
            let cfg: BaselineConfig = config.load()?;
            commands::baseline_to(&split_dir, kind, &cfg, &output)?;
            println!("saved {} to {}", kind.as_str(), output.display());
            Ok(())
        }
        Command::Evaluate {
            model,
            split_dir,
            output,
            partition,
            name,
        } => {
            let name = name.unwrap_or_else(|| {
                model.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
            });
            let report = commands::evaluate_model(&model, &split_dir, partition, &name)?;
            commands::write_report(&output, &report)?;
            println!(
                "{name}: accuracy {:.4}, weighted F1 {:.4} on {} items",
                report.aggregate.accuracy, report.weighted_avg.f1, report.total
            );
            Ok(())
        }
        Command::Compare { reports, digits, output } => {
            anyhow::ensure!(!reports.is_empty(), "no reports given");
            let (_, md, csv) = commands::compare_reports(&reports, digits)?;
            if let Some(stem) = output {
                std::fs::write(stem.with_extension("md"), &md)?;
                std::fs::write(stem.with_extension("csv"), &csv)?;
            }
            print!("{md}");
            Ok(())
        }
        Command::Predict { model, texts } => {
            let classifier = crimeclass_service::models::load(&model).map_err(anyhow::Error::msg)?;
            let texts = if texts.is_empty() {
                std::io::stdin()
                    .lines()
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .filter(|l| !l.trim().is_empty())
                    .collect()
            } else {
                texts
            };
            for text in &texts {
                let p = classifier.predict(text)?;
                println!("{}", serde_json::to_string(&p)?);
            }
            Ok(())
        }
        Command::Serve {
            model,
            port,
            host,
            no_privacy_mode,
            config,
            storage,
        } => {
            let mut cfg: ServiceConfig = match config {
                Some(p) => {
                    let raw = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str(&raw).with_context(|| format!("parsing {}", p.display()))?
                }
                None => ServiceConfig::default(),
            };
            if model.is_some() {
                cfg.model_dir = model;
            }
            cfg.bind = std::net::SocketAddr::new(host, port);
            if no_privacy_mode {
                cfg.privacy_mode = false;
            }
            if storage.is_some() {
                cfg.storage_path = storage;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crimeclass_service::serve(cfg)).map_err(|e| anyhow::anyhow!(e))
        }
        Command::Pipeline { action } => match action {
            PipelineAction::Schema => {
                print!("{}", toml::to_string_pretty(&PipelineConfig::example())?);
                Ok(())
            }
            PipelineAction::Run { config } => {
                let cfg = PipelineConfig::load(&config)?;
                let summary = Pipeline::new(cfg).run()?;
                for s in &summary.manifest.stages {
                    println!("{:<10} {:?} {:.1}s", s.stage, s.status, s.seconds);
                }
                println!("artifacts in {}", summary.root.display());
                Ok(())
            }
        },
        Command::Smoke {
            output,
            classes,
            per_class,
            seed,
            kind,
        } => {
            let cfg = SmokeConfig {
                kind,
                classes,
                per_class,
                seed,
                ..Default::default()
            };
            let n = write_smoke(&output, &cfg)?;
            println!("wrote {n} complaints to {}", output.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(PipelineError::Schema(_)) = e.downcast_ref::<PipelineError>() {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
