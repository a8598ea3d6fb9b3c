//! Command-line surface. Every successful command prints one JSON summary
//! line on stdout. Exit codes: 0 success, 1 usage or configuration error,
//! 2 data error, 3 oracle or protocol error.

use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::augment::augment_target;
use crate::corpus::LabeledCorpus;
use crate::distance::{collect_amplitudes, distance_map};
use crate::dodiss::dodiss_map;
use crate::error::{Error, Result};
use crate::io::config::{OracleSpec, RunConfig};
use crate::io::dataset::{load_corpus, load_images, save_corpus, save_images};
use crate::io::heatmap::{export_heatmap, sidecar_path};
use crate::io::mapfile::MapFile;
use crate::io::protocol::{serve, SubprocessOracle, DEFAULT_TIMEOUT};
use crate::io::checkpoint;
use crate::model::{ModelSpec, ToyModel};
use crate::oracle::{accuracy, PredictionOracle};
use crate::pipeline::{run_benchmark, BenchmarkConfig};
use crate::samix::generate_batch;
use crate::synth::generate;
use crate::train::{train_samix, train_source_only, Refresh, TrainContext};

#[derive(Debug, Parser)]
#[command(name = "samix", version, about = "Spectral sensitivity maps and sensitivity-guided amplitude mixup")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// JSON run configuration; flags override its paths and seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for every random component.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Toy model checkpoint answering predictions in-process.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// External model command (split on whitespace) speaking the line protocol.
    #[arg(long, conflicts_with = "checkpoint")]
    pub oracle_cmd: Option<String>,
    /// Number of external model processes.
    #[arg(long)]
    pub processes: Option<usize>,
    /// Per-request timeout for external models, in seconds.
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the paired synthetic two-domain dataset.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Expand few-shot target images with geometric transforms.
    AugmentTarget {
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Per-frequency 1-Wasserstein distance between two image directories.
    DistanceMap {
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Sensitivity map of a model under distance-scaled basis perturbations.
    Dodiss {
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        distance: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Evaluate on at most this many seeded source images.
        #[arg(long)]
        max_samples: Option<usize>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Adversarially mixed images for a labeled source set.
    Mix {
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Directory of (augmented) target images to draw from.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        sensitivity: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Train the toy model, with mixup when a target pool and sensitivity map are given.
    Train {
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        sensitivity: Option<PathBuf>,
        /// Distance map, needed only for periodic sensitivity refresh.
        #[arg(long)]
        distance: Option<PathBuf>,
        /// Start from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch metrics as JSON.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Accuracy of a model on a labeled directory.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Render a map file as a grayscale PNG.
    Heatmap {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer line-protocol requests on stdin/stdout with a toy model checkpoint.
    ServeModel {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the whole synthetic benchmark in-process for several seeds.
    Benchmark {
        /// Comma-separated seeds.
        #[arg(long, default_value = "0,1,2,3,4")]
        seeds: String,
        /// JSON benchmark configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        Error::Oracle { .. } | Error::Protocol(_) => 3,
        _ => 2,
    }
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            if !summary.is_null() {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig> {
    let mut cfg = match &arg.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = arg.seed {
        cfg.seed = Some(seed);
        cfg = cfg.apply_seed();
    }
    Ok(cfg)
}

fn need(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("--{name} is required (flag or config paths)")))
}

fn build_oracle(args: &OracleArgs, cfg: &RunConfig) -> Result<Box<dyn PredictionOracle>> {
    let spec = match (&args.oracle_cmd, &args.checkpoint) {
        (Some(cmd), _) => OracleSpec::Subprocess {
            command: cmd.split_whitespace().map(String::from).collect(),
            processes: 1,
            timeout_secs: None,
        },
        (None, Some(path)) => OracleSpec::Builtin {
            checkpoint: Some(path.clone()),
        },
        (None, None) => cfg.oracle.clone(),
    };
    match spec {
        OracleSpec::Builtin { checkpoint: Some(path) } => Ok(Box::new(checkpoint::load(&path)?)),
        OracleSpec::Builtin { checkpoint: None } => {
            Err(Error::Config("no model given: use --checkpoint or --oracle-cmd".into()))
        }
        OracleSpec::Subprocess {
            command,
            processes,
            timeout_secs,
        } => {
            let timeout = args
                .timeout_secs
                .or(timeout_secs)
                .map_or(DEFAULT_TIMEOUT, Duration::from_secs);
            let oracle = SubprocessOracle::spawn(&command, args.processes.unwrap_or(processes))?
                .with_timeout(timeout);
            Ok(Box::new(oracle))
        }
    }
}

fn labeled(dir: &Path, labels: &Path) -> Result<LabeledCorpus> {
    Ok(load_corpus(dir, labels)?.1)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn run(command: Command) -> Result<Value> {
    match command {
        Command::GenSynth { out, cfg } => {
            let cfg = load_config(&cfg)?;
            let data = generate(&cfg.synth)?;
            save_corpus(&data.source_train, &out.join("source_train"), "src")?;
            save_corpus(&data.source_val, &out.join("source_val"), "val")?;
            save_images(&data.target_train, &out.join("target_train"), "tgt")?;
            save_corpus(&data.target_test, &out.join("target_test"), "test")?;
            Ok(json!({
                "command": "gen-synth",
                "out": out,
                "seed": cfg.synth.seed,
                "source_train": data.source_train.len(),
                "source_val": data.source_val.len(),
                "target_train": data.target_train.len(),
                "target_test": data.target_test.len(),
            }))
        }
        Command::AugmentTarget { target, out, cfg } => {
            let cfg = load_config(&cfg)?;
            let target = need(target, &cfg.paths.target, "target")?;
            let set = load_images(&target)?;
            let pool = augment_target(&set.images, &cfg.augment)?;
            save_images(&pool, &out, "aug")?;
            Ok(json!({
                "command": "augment-target",
                "inputs": set.images.len(),
                "outputs": pool.len(),
                "out": out,
            }))
        }
        Command::DistanceMap {
            source,
            target,
            out,
            cfg,
        } => {
            let cfg = load_config(&cfg)?;
            let source = need(source, &cfg.paths.source, "source")?;
            let target = need(target, &cfg.paths.target, "target")?;
            let s = load_images(&source)?;
            let t = load_images(&target)?;
            let mut d = distance_map(&collect_amplitudes(&s.images)?, &collect_amplitudes(&t.images)?)?;
            d.source_id = source.display().to_string();
            d.target_id = target.display().to_string();
            MapFile::from_distance(&d).write(&out)?;
            let (min, max) = d.map.min_max();
            Ok(json!({
                "command": "distance-map",
                "out": out,
                "height": d.map.height(),
                "width": d.map.width(),
                "mean_l1": d.map.mean_l1(),
                "min": min,
                "max": max,
            }))
        }
        Command::Dodiss {
            source,
            labels,
            distance,
            out,
            max_samples,
            oracle,
            cfg,
        } => {
            let cfg = load_config(&cfg)?;
            let source = need(source, &cfg.paths.source, "source")?;
            let labels = need(labels, &cfg.paths.source_labels, "labels")?;
            let distance = need(distance, &cfg.paths.distance, "distance")?;
            let oracle = build_oracle(&oracle, &cfg)?;
            let corpus = labeled(&source, &labels)?;
            let dmap = MapFile::read(&distance)?
                .into_distance()
                .map_err(|e| Error::data(&distance, e.to_string()))?;
            let mut dcfg = cfg.dodiss.clone();
            if max_samples.is_some() {
                dcfg.max_samples = max_samples;
            }
            let s = dodiss_map(oracle.as_ref(), &corpus, &dmap, &dcfg)?;
            MapFile::from_sensitivity(&s).write(&out)?;
            Ok(json!({
                "command": "dodiss",
                "out": out,
                "oracle": s.oracle_id,
                "dataset_size": s.dataset_size,
                "clean_error": s.clean_error,
                "mean_l1": s.map.mean_l1(),
            }))
        }
        Command::Mix {
            source,
            labels,
            target,
            sensitivity,
            out,
            oracle,
            cfg,
        } => {
            let cfg = load_config(&cfg)?;
            let source = need(source, &cfg.paths.source, "source")?;
            let labels = need(labels, &cfg.paths.source_labels, "labels")?;
            let target = need(target, &cfg.paths.target, "target")?;
            let sensitivity = need(sensitivity, &cfg.paths.sensitivity, "sensitivity")?;
            let oracle = build_oracle(&oracle, &cfg)?;
            let (names, corpus) = load_corpus(&source, &labels)?;
            let pool = load_images(&target)?;
            let sens = MapFile::read(&sensitivity)?
                .into_sensitivity()
                .map_err(|e| Error::data(&sensitivity, e.to_string()))?;
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(cfg.train.seed);
            let samples = generate_batch(
                oracle.as_ref(),
                corpus.images(),
                corpus.labels(),
                &pool.images,
                &sens,
                &cfg.mix,
                &mut rng,
            )?;
            let images: Vec<_> = samples.iter().map(|s| s.image.clone()).collect();
            let files = save_images(&images, &out, "mix")?;
            let manifest = out.join("manifest.csv");
            let mut w = csv::Writer::from_path(&manifest).map_err(|e| Error::data(&manifest, e.to_string()))?;
            let csv_err = |e: csv::Error| Error::data(&manifest, e.to_string());
            w.write_record(["file", "source", "target", "lambda", "loss"]).map_err(csv_err)?;
            for (file, s) in files.iter().zip(&samples) {
                w.write_record([
                    file.clone(),
                    source.join(&names[s.source_index]).display().to_string(),
                    target.join(&pool.names[s.target_index]).display().to_string(),
                    format!("{:?}", s.lambda_star),
                    format!("{:?}", s.final_loss),
                ])
                .map_err(csv_err)?;
            }
            w.flush()?;
            let mean_lambda = samples.iter().map(|s| s.lambda_star).sum::<f64>() / samples.len() as f64;
            Ok(json!({
                "command": "mix",
                "out": out,
                "images": samples.len(),
                "mean_lambda": mean_lambda,
            }))
        }
        Command::Train {
            source,
            labels,
            target,
            sensitivity,
            distance,
            init,
            out,
            log,
            mu,
            epochs,
            cfg,
        } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(mu) = mu {
                cfg.train.mu = mu;
            }
            if let Some(epochs) = epochs {
                cfg.train.epochs = epochs;
            }
            cfg.validate()?;
            let source = need(source, &cfg.paths.source, "source")?;
            let labels = need(labels, &cfg.paths.source_labels, "labels")?;
            let corpus = labeled(&source, &labels)?;
            let val = match (&cfg.paths.source_val, &cfg.paths.source_val_labels) {
                (Some(d), Some(l)) => Some(labeled(d, l)?),
                _ => None,
            };
            let test = match (&cfg.paths.target_test, &cfg.paths.target_test_labels) {
                (Some(d), Some(l)) => Some(labeled(d, l)?),
                _ => None,
            };
            let mut model = match init {
                Some(path) => checkpoint::load(&path)?,
                None => {
                    let (h, w, c) = corpus.dims().expect("corpus is non-empty");
                    ToyModel::new(
                        ModelSpec {
                            height: h,
                            width: w,
                            channels: c,
                            pool_grid: cfg.model.pool_grid,
                            hidden: cfg.model.hidden,
                            classes: corpus.num_classes(),
                        },
                        cfg.train.seed,
                    )
                    .map_err(|e| Error::Config(e.to_string()))?
                }
            };
            let dmap = match distance.or(cfg.paths.distance.clone()) {
                Some(p) => Some(
                    MapFile::read(&p)?
                        .into_distance()
                        .map_err(|e| Error::data(&p, e.to_string()))?,
                ),
                None => None,
            };
            let ctx = TrainContext {
                source_val: val.as_ref(),
                target_test: test.as_ref(),
                uda: None,
                refresh: dmap.as_ref().map(|d| Refresh {
                    distance: d,
                    corpus: &corpus,
                    config: &cfg.dodiss,
                }),
            };
            let target = target.or(cfg.paths.target.clone());
            let sensitivity = sensitivity.or(cfg.paths.sensitivity.clone());
            let (mode, train_log) = match (target, sensitivity) {
                (Some(t), Some(s)) => {
                    let pool = load_images(&t)?;
                    let sens = MapFile::read(&s)?
                        .into_sensitivity()
                        .map_err(|e| Error::data(&s, e.to_string()))?;
                    let log = train_samix(&mut model, &corpus, &pool.images, &sens, &cfg.mix, &cfg.train, &ctx)?;
                    ("samix", log)
                }
                (None, None) => ("source-only", train_source_only(&mut model, &corpus, &cfg.train, &ctx)?),
                _ => return Err(Error::Config("mixup training needs both --target and --sensitivity".into())),
            };
            checkpoint::save(&model, &out)?;
            if let Some(path) = &log {
                write_json(path, &train_log)?;
            }
            let last = train_log.epochs.last();
            Ok(json!({
                "command": "train",
                "mode": mode,
                "out": out,
                "epochs": train_log.epochs.len(),
                "final_loss": last.map(|m| m.train_loss),
                "source_val_accuracy": last.and_then(|m| m.source_val_accuracy),
                "target_accuracy": last.and_then(|m| m.target_accuracy),
            }))
        }
        Command::Eval {
            data,
            labels,
            oracle,
            cfg,
        } => {
            let cfg = load_config(&cfg)?;
            let oracle = build_oracle(&oracle, &cfg)?;
            let corpus = labeled(&data, &labels)?;
            let acc = accuracy(oracle.as_ref(), &corpus, cfg.dodiss.batch_size)?;
            Ok(json!({
                "command": "eval",
                "oracle": oracle.id(),
                "items": corpus.len(),
                "accuracy": acc,
            }))
        }
        Command::Heatmap { map, out } => {
            let file = MapFile::read(&map)?;
            let range = export_heatmap(&file.map, &out)?;
            Ok(json!({
                "command": "heatmap",
                "kind": file.kind.name(),
                "out": out,
                "sidecar": sidecar_path(&out),
                "min": range.min,
                "max": range.max,
            }))
        }
        Command::ServeModel { checkpoint: path } => {
            let model = checkpoint::load(&path)?;
            let stdin = io::stdin();
            serve(&model, BufReader::new(stdin.lock()), io::stdout().lock())?;
            Ok(Value::Null)
        }
        Command::Benchmark { seeds, config } => {
            let base: BenchmarkConfig = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
                }
                None => BenchmarkConfig::default(),
            };
            let seeds = seeds
                .split(',')
                .map(|s| s.trim().parse::<u64>().map_err(|_| Error::Config(format!("bad seed {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            let mut reports = Vec::new();
            for seed in seeds {
                let run = run_benchmark(&base.with_seed(seed))?;
                eprintln!("{}", serde_json::to_string(&run.report).expect("report serializes"));
                reports.push(run.report);
            }
            let mean = |f: fn(&crate::pipeline::BenchmarkReport) -> f64| {
                reports.iter().map(f).sum::<f64>() / reports.len() as f64
            };
            Ok(json!({
                "command": "benchmark",
                "runs": reports.len(),
                "source_only_val_accuracy": mean(|r| r.source_only_val_accuracy),
                "source_only_target_accuracy": mean(|r| r.source_only_target_accuracy),
                "samix_target_accuracy": mean(|r| r.samix_target_accuracy),
                "dodiss_l1_before": mean(|r| r.dodiss_l1_before),
                "dodiss_l1_after": mean(|r| r.dodiss_l1_after),
                "reports": reports,
            }))
        }
    }
}
