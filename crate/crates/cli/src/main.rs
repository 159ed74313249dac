//! `iotfp`: batch driver for flow extraction, synthetic data, training, grid
//! evaluation, layer-frozen retraining and inference benchmarks.
//!
//! Every numeric output is printed with six decimals. On failure the last
//! line on stderr reads `error: kind=<kind> message=<text>` and the process
//! exits with status 1 (2 for usage errors).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iotfp::harness::{P_MAX, W_MAX};
use iotfp::model::{Group, ModelType};

#[derive(Debug, Parser)]
#[command(name = "iotfp", version, about = "IoT device identification from flow features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cut a packet JSONL stream into flows and write feature rows.
    Extract(ExtractArgs),
    /// Generate a labeled dataset from a TOML environment config.
    Gen(GenArgs),
    /// Train one model on a window of days.
    Train(TrainArgs),
    /// Evaluate the (w, p) grid and write it as CSV.
    Grid(GridArgs),
    /// Update a neural model with new data, optionally freezing layers.
    Retrain(RetrainArgs),
    /// Time batched inference over sampled rows.
    Bench(BenchArgs),
    /// Print the provenance and shape of a stored model.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Packet records, one JSON object per line.
    #[arg(long)]
    packets: PathBuf,
    /// JSON device registry `{"devices": {mac: {device_id, category_id}}}`.
    /// Without it devices are numbered by first appearance.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Feature rows (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Also write the flow records (JSONL).
    #[arg(long)]
    flows_out: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    inactive_timeout: f64,
    #[arg(long, default_value_t = 30.0)]
    active_timeout: f64,
    /// Timestamp of the start of day 1; defaults to the first packet.
    #[arg(long)]
    day_origin: Option<f64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// TOML environment config.
    #[arg(long)]
    config: PathBuf,
    /// Feature rows (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Also write the synthetic packet stream (JSONL).
    #[arg(long)]
    packets_out: Option<PathBuf>,
    /// Also write the device registry matching `--packets-out`.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
struct HyperArgs {
    /// Neural epochs.
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Neural mini-batch size.
    #[arg(long, default_value_t = 128)]
    batch: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Rescale each batch gradient to at most this global L2 norm.
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Forest size.
    #[arg(long, default_value_t = 3)]
    n_estimators: usize,
    /// Tree depth limit.
    #[arg(long, default_value_t = 100)]
    max_depth: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// rfc, dtc, fc, lstm or conv1d.
    #[arg(long = "model-type")]
    model_type: ModelType,
    /// all-device, all-category, per-device or per-category.
    #[arg(long)]
    group: Group,
    /// First training day.
    #[arg(long, default_value_t = 1)]
    start: u32,
    /// Number of training days; defaults to every day from `--start`.
    #[arg(long)]
    window: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Model container to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "rfc,dtc")]
    types: Vec<ModelType>,
    #[arg(long, value_delimiter = ',', default_value = "all-device")]
    groups: Vec<Group>,
    #[arg(long, default_value_t = W_MAX)]
    w_max: u32,
    #[arg(long, default_value_t = P_MAX)]
    p_max: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    hyper: HyperArgs,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for one PNG heatmap per (type, group).
    #[arg(long)]
    heatmaps: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RetrainArgs {
    /// Base model container.
    #[arg(long)]
    model: PathBuf,
    /// Update rows.
    #[arg(long)]
    data: PathBuf,
    /// Restrict the update to days `start..=start+window-1`.
    #[arg(long)]
    start: Option<u32>,
    #[arg(long)]
    window: Option<u32>,
    /// Number of leading weighted layers to freeze.
    #[arg(long = "freeze", default_value_t = 0)]
    freeze_k: usize,
    /// Evaluation set as `NAME=PATH`; repeatable. Defaults to the update rows.
    #[arg(long = "eval")]
    eval: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Updated model container.
    #[arg(long)]
    out: PathBuf,
    /// Also write the report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    /// Rows to sample from.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InfoArgs {
    #[arg(long)]
    model: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            eprintln!("error: kind=usage message={}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train(a),
        Command::Grid(a) => commands::grid(a),
        Command::Retrain(a) => commands::retrain(a),
        Command::Bench(a) => commands::bench(a),
        Command::Info(a) => commands::info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message={}", commands::error_kind(&e), one_line(&format!("{e:#}")));
            ExitCode::from(1)
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
