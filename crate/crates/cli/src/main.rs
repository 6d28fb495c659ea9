//! `edgebot`: flow ingestion, model training and edge inference for IoT
//! botnet detection.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "edgebot", version, about, arg_required_else_help = true)]
pub struct Cli {
    /// Seed for every randomized step [config: seed]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key = value` config file; repeat to layer, later files win
    #[arg(long = "config", global = true, value_name = "FILE")]
    pub configs: Vec<PathBuf>,
    /// Directory for outputs [config: output_dir]
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for training and search [config: threads]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a Zeek conn.log or labeled CSV and write a normalized conn.log
    Ingest(IngestArgs),
    /// Generate a labeled synthetic conn.log
    Synth(SynthArgs),
    /// Clean, split, encode and scale flows into train/validation/test CSVs
    Preprocess(PreprocessArgs),
    /// Spearman correlations and importance-based feature selection
    SelectFeatures(SelectArgs),
    /// Fit a registered learner and write a model artifact
    Train(TrainArgs),
    /// Random hyperparameter search scored on validation accuracy
    Tune(TuneArgs),
    /// Score a model artifact on a dataset
    Evaluate(EvaluateArgs),
    /// Score a model on Gaussian-perturbed copies of a dataset
    NoiseTest(NoiseArgs),
    /// Time training and inference of several learners
    Benchmark(BenchmarkArgs),
    /// Classify a conn.log stream, optionally following a growing file
    Serve(ServeArgs),
    /// Classify a conn.log file in one batch
    Predict(PredictArgs),
    /// Print a human-readable description of a model artifact
    Dump(DumpArgs),
    /// List registered learners
    Learners,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Zeek conn.log (`-` for stdin) or labeled CSV
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: InputFormat,
    /// Draw a class-balanced subset of this many flows
    #[arg(long)]
    pub subset: Option<usize>,
    /// Attack share of the subset
    #[arg(long, default_value_t = 0.5)]
    pub attack_ratio: f64,
    /// Output file name inside the output directory
    #[arg(long, default_value = "flows.log")]
    pub out: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputFormat {
    Auto,
    Zeek,
    Csv,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20_000)]
    pub rows: usize,
    #[arg(long, default_value_t = 0.5)]
    pub attack_ratio: f64,
    #[arg(long, default_value = "flows.log")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Labeled conn.log or CSV
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: InputFormat,
    /// Keep only these encoded columns (comma-separated)
    #[arg(long, value_delimiter = ',')]
    pub keep: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Dataset CSV with a JSON sidecar (usually train.csv)
    #[arg(long)]
    pub data: PathBuf,
    /// Take importances from this artifact instead of fitting a learner
    #[arg(long, conflicts_with = "learner")]
    pub model: Option<PathBuf>,
    /// Learner fitted with its default parameters to rank features
    #[arg(long, default_value = "xgb")]
    pub learner: String,
    /// gain, cover or weight
    #[arg(long, default_value = "gain")]
    pub mode: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Registered learner name
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: PathBuf,
    /// `defaults` or a JSON hyperparameter file (e.g. best_params.json)
    #[arg(long, default_value = "defaults")]
    pub params: String,
    /// Override one hyperparameter, `key=value`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Restrict training to the features in a selection.json
    #[arg(long)]
    pub selection: Option<PathBuf>,
    /// Also score the model on this dataset
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Split search for boosting learners
    #[arg(long, value_enum)]
    pub search: Option<SearchArg>,
    #[arg(long, default_value = "model.ebot")]
    pub out: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SearchArg {
    Histogram,
    Exhaustive,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub validation: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub n_iter: usize,
    #[arg(long)]
    pub selection: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model artifact
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Report file stem inside the output directory
    #[arg(long, default_value = "report")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset to perturb (usually test.csv)
    #[arg(long)]
    pub data: PathBuf,
    /// Training dataset whose column deviations scale the noise
    #[arg(long)]
    pub train: PathBuf,
    /// Noise deviation as a fraction of each column's deviation
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    /// Number of noise draws, seeded from `--seed` upward
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Directory holding train.csv and test.csv with sidecars
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "rf,xgb,lgbm")]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub selection: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// conn.log to read, `-` for stdin
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    /// Emit only attack predictions and error records
    #[arg(long)]
    pub alerts_only: bool,
    /// Classification workers [config: serve.workers]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write records here instead of stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Stamp every record with this RFC 3339 instant instead of the wall clock
    #[arg(long, value_name = "TIME")]
    pub fixed_time: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub stream: StreamArgs,
    /// Keep reading as the input file grows
    #[arg(long)]
    pub follow: bool,
    /// Poll interval in milliseconds while following
    #[arg(long, default_value_t = 200)]
    pub poll_ms: u64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub stream: StreamArgs,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub model: PathBuf,
}

/// Settings resolved from defaults, config files, environment and flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: usize,
    pub config: Config,
}

impl Settings {
    pub const DEFAULT_SEED: u64 = 42;

    fn resolve(cli: &Cli) -> Result<Settings, CliError> {
        let mut config = Config::default();
        for path in &cli.configs {
            config.merge_file(path)?;
        }
        config.merge_env(std::env::vars());
        let seed = match cli.seed {
            Some(s) => s,
            None => config.parse("seed")?.unwrap_or(Self::DEFAULT_SEED),
        };
        let output_dir = match &cli.output_dir {
            Some(d) => d.clone(),
            None => config.get("output_dir").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
        };
        let threads = match cli.threads {
            Some(t) => t,
            None => config.parse("threads")?.unwrap_or(1),
        };
        if threads == 0 {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        Ok(Settings {
            seed,
            output_dir,
            threads,
            config,
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EDGEBOT_LOG", level)).init();
    let result = Settings::resolve(&cli).and_then(|s| commands::run(&cli.command, &s));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("edgebot: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
