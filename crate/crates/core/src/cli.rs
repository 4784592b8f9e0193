//! The `plsprune` command line: `train`, `prune`, `compare`, `report`.
//!
//! Exit codes: 0 on success, 1 when a stage fails, 2 for usage errors
//! (including a missing dataset file).

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{DataSource, RunConfig};
use crate::criteria::{write_scores_csv, Criterion};
use crate::error::{Error, Result};
use crate::network::{self, evaluate, train_sgd, Network};
use crate::pipeline::{self, PruneMode};
use crate::report::PruningReport;
use crate::representation::{build_feature_matrix, write_dump, PoolingMode};

#[derive(Debug, Parser)]
#[command(name = "plsprune", version, about = "PLS+VIP filter pruning for small CNNs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and save a checkpoint.
    Train(RunArgs),
    /// Prune a checkpoint and write the pruned model and reports.
    Prune(RunArgs),
    /// Run one pruning iteration per criterion from the same checkpoint.
    Compare(RunArgs),
    /// Summarize a saved pruning report and emit plot-ready CSVs.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint to prune (default `<out>/model.json`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_parser = ["synthetic", "idx", "csv"])]
    pub dataset: Option<String>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long, value_parser = ["gmax", "gavg", "max2x2"])]
    pub pooling: Option<String>,
    #[arg(long, value_parser = ["pls", "l1", "apoz"])]
    pub criterion: Option<String>,
    #[arg(long)]
    pub pls_sample_fraction: Option<f64>,
    #[arg(long, value_parser = ["iterative", "single"])]
    pub mode: Option<String>,
    /// Fine-tuning epochs per pruning iteration.
    #[arg(long)]
    pub fine_tune_epochs: Option<usize>,
    /// Also write the first iteration's filter feature matrix.
    #[arg(long)]
    pub dump_features: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON written by `prune`.
    pub report: PathBuf,
    /// Directory for the CSVs (default: next to the report).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

/// Resolves defaults < config file < flags.
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &args.model {
        cfg.model = Some(v.clone());
    }
    if let Some(v) = &args.dataset {
        cfg.data.source = match v.as_str() {
            "idx" => DataSource::Idx,
            "csv" => DataSource::Csv,
            _ => DataSource::Synthetic,
        };
    }
    if let Some(v) = &args.images {
        cfg.data.images = Some(v.clone());
    }
    if let Some(v) = &args.labels {
        cfg.data.labels = Some(v.clone());
    }
    if let Some(v) = &args.csv {
        cfg.data.csv = Some(v.clone());
    }
    if let Some(v) = args.samples {
        cfg.data.samples = v;
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = args.ratio {
        cfg.prune.ratio = v;
    }
    if let Some(v) = args.iterations {
        cfg.prune.iterations = v;
    }
    if let Some(v) = args.components {
        cfg.prune.components = v;
    }
    if let Some(v) = &args.pooling {
        cfg.prune.pooling = v.parse::<PoolingMode>()?;
    }
    if let Some(v) = &args.criterion {
        cfg.prune.criterion = v.parse::<Criterion>()?;
    }
    if let Some(v) = args.pls_sample_fraction {
        cfg.prune.pls_sample_fraction = v;
    }
    if let Some(v) = &args.mode {
        cfg.prune.mode = v.parse::<PruneMode>()?;
    }
    if let Some(v) = args.fine_tune_epochs {
        cfg.prune.fine_tune.epochs = v;
    }
    cfg.propagate_seed();
    Ok(cfg)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare(args: &RunArgs) -> std::result::Result<RunConfig, Failure> {
    let cfg = resolve_config(args)?;
    cfg.check_data_paths().map_err(Failure::Usage)?;
    create_dir(&cfg.out)?;
    Ok(cfg)
}

fn load_checkpoint(cfg: &RunConfig) -> std::result::Result<Network, Failure> {
    let path = cfg.model_path();
    if !path.exists() {
        return Err(Failure::Usage(format!(
            "checkpoint {} does not exist (run `plsprune train` first or pass --model)",
            path.display()
        )));
    }
    Ok(network::load(path)?)
}

fn cmd_train(args: &RunArgs) -> std::result::Result<(), Failure> {
    let cfg = prepare(args)?;
    let (train, heldout) = cfg.load_data()?;
    let mut net = Network::plain_cnn(train.shape(), &cfg.network.filters, train.class_count, cfg.seed)?;
    let log = train_sgd(&mut net, &train, &cfg.train)?;
    let accuracy = evaluate(&net, &heldout)?;
    network::save(&net, cfg.out.join("model.json"))?;
    write_text(
        &cfg.out.join("train_log.json"),
        &serde_json::to_string_pretty(&log).expect("log serializes"),
    )?;
    write_text(&cfg.out.join("config.toml"), &cfg.to_toml())?;
    println!(
        "trained {} epochs on {} samples; held-out accuracy {:.4}",
        log.epochs.len(),
        train.len(),
        accuracy
    );
    Ok(())
}

fn cmd_prune(args: &RunArgs) -> std::result::Result<(), Failure> {
    let cfg = prepare(args)?;
    let net = load_checkpoint(&cfg)?;
    let (train, heldout) = cfg.load_data()?;
    if args.dump_features {
        let rows = crate::data::subsample(
            &train,
            cfg.prune.pls_sample_fraction,
            crate::seed::derive(cfg.prune.seed, crate::seed::stage::SUBSAMPLE, 1),
        )?;
        let (x, index) = build_feature_matrix(&net, &rows, cfg.prune.pooling)?;
        write_dump(cfg.out.join("features.json"), &x, &index)?;
    }
    let (pruned, report) = match pipeline::run(net, &train, &heldout, &cfg.prune) {
        Ok(done) => done,
        Err(Error::Aborted {
            iteration,
            source,
            partial,
        }) => {
            partial.save(cfg.out.join("report.partial.json"))?;
            return Err(Failure::Run(Error::Aborted {
                iteration,
                source,
                partial,
            }));
        }
        Err(e) => return Err(e.into()),
    };
    write_outputs(&cfg.out, &report)?;
    network::save(&pruned, cfg.out.join("pruned_model.json"))?;
    print!("{}", report.summary());
    Ok(())
}

fn write_outputs(out: &Path, report: &PruningReport) -> Result<()> {
    report.save(out.join("report.json"))?;
    report.write_iterations_csv(create_file(&out.join("report.csv"))?)?;
    report.write_layers_csv(create_file(&out.join("layers.csv"))?)?;
    for r in &report.iterations {
        write_scores_csv(
            create_file(&out.join(format!("scores_iter{}.csv", r.iteration)))?,
            &r.scores,
        )?;
    }
    Ok(())
}

fn cmd_compare(args: &RunArgs) -> std::result::Result<(), Failure> {
    let cfg = prepare(args)?;
    let net = load_checkpoint(&cfg)?;
    let (train, heldout) = cfg.load_data()?;
    let cmp = pipeline::compare_criteria(&net, &train, &heldout, &cfg.prune)?;
    cmp.write_csv(create_file(&cfg.out.join("compare.csv"))?)?;
    write_text(
        &cfg.out.join("compare.json"),
        &serde_json::to_string_pretty(&cmp).expect("comparison serializes"),
    )?;
    print!("{}", cmp.table());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> std::result::Result<(), Failure> {
    if !args.report.exists() {
        return Err(Failure::Usage(format!(
            "report {} does not exist",
            args.report.display()
        )));
    }
    let report = PruningReport::load(&args.report)?;
    report.check_flops_sums()?;
    let out = args
        .out
        .clone()
        .or_else(|| args.report.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    create_dir(&out)?;
    report.write_iterations_csv(create_file(&out.join("trajectory.csv"))?)?;
    report.write_layers_csv(create_file(&out.join("layers.csv"))?)?;
    print!("{}", report.summary());
    Ok(())
}

pub fn run(cli: Cli) -> ExitCode {
    let outcome = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Prune(a) => cmd_prune(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

pub fn main() -> ExitCode {
    run(Cli::parse())
}
