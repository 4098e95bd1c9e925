mod commands;
mod config;
mod runlog;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "mmvm", version = mmvm_core::VERSION, long_version = long_version(), about = "Visual-matching data, alignment and evaluation pipeline")]
pub struct Cli {
    /// TOML config file (defaults <- file <- MMVM_* env <- flags).
    #[arg(long, global = true, env = "MMVM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log at debug level.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

fn long_version() -> String {
    let formats: Vec<String> = runlog::format_versions().iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{} ({})", mmvm_core::VERSION, formats.join(", "))
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a matching-question manifest from annotated videos.
    Generate(GenerateArgs),
    /// Burn each question's visual prompts into its images.
    Render(RenderArgs),
    /// Simulate pseudo-video pairs from segmented still images.
    Simulate(SimulateArgs),
    /// Train the expert-to-base adapter with the object-level contrastive loss.
    Pretrain(PretrainArgs),
    /// Write instruction records for fine-tuning.
    FormatSft(FormatSftArgs),
    /// Ask a model every question of a manifest and score it.
    Evaluate(EvaluateArgs),
    /// Render evaluation reports as a leaderboard.
    Report(ReportArgs),
    /// Run the built-in consistency checks.
    Selftest,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// COCO-style video segmentation annotations (otherwise the synthetic corpus).
    #[arg(long, conflicts_with = "synthetic")]
    pub videos: Option<PathBuf>,
    /// Number of synthetic videos.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Seconds between the two frames of a question.
    #[arg(long)]
    pub interval: Option<f64>,
    /// Maximum options per question (0 = no cap).
    #[arg(long)]
    pub option_cap: Option<usize>,
    /// Reason annotation: off, replay or http.
    #[arg(long)]
    pub annotate: Option<String>,
    /// JSONL of recorded responses for replay.
    #[arg(long)]
    pub transcript: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Root the annotation file's image paths are relative to.
    #[arg(long)]
    pub frames: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Root image uris resolve against (default: the manifest's directory).
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Use the manifest's segmented images instead of the synthetic shapes corpus.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, requires = "manifest")]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Also write each view as PNG.
    #[arg(long)]
    pub write_views: bool,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Score with cosine similarity instead of dot products.
    #[arg(long)]
    pub cosine: bool,
    /// f64 or f32.
    #[arg(long)]
    pub precision: Option<String>,
}

#[derive(Args, Debug)]
pub struct FormatSftArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// A, B, mix or both.
    #[arg(long)]
    pub variant: Option<String>,
    /// Probability of variant B in mix mode.
    #[arg(long)]
    pub p: Option<f64>,
    /// Also render the edited images from rasters under this root.
    #[arg(long)]
    pub render_images: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Root image uris resolve against (default: the manifest's directory).
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// oracle, random, replay or http.
    #[arg(long)]
    pub client: Option<String>,
    #[arg(long)]
    pub transcript: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Name recorded for replayed runs.
    #[arg(long)]
    pub name: Option<String>,
    /// Send one vertically stacked image instead of several.
    #[arg(long)]
    pub single_image: bool,
    #[arg(long)]
    pub concurrency: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// `report.json` files written by `evaluate`.
    #[arg(num_args = 1.., required_unless_present = "csv")]
    pub reports: Vec<PathBuf>,
    /// A leaderboard CSV to re-render instead.
    #[arg(long, conflicts_with = "reports")]
    pub csv: Option<PathBuf>,
    /// table, csv or plot.
    #[arg(long, default_value = "table")]
    pub format: String,
    #[arg(long)]
    pub out: PathBuf,
}

pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Info })
        .parse_env(env_logger::Env::new().filter("MMVM_LOG"))
        .init();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
