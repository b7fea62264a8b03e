//! `segreport`: structured CT reports from segmentation masks.
//!
//! Exit codes: 0 success, 1 internal or unexpected error, 2 bad input
//! (missing file, unreadable manifest, config or image), 3 narrative failed
//! the consistency check twice, 4 no style examples for the label set,
//! 5 predictions and truth do not line up, 6 chat endpoint failure.

mod evaluate;
mod failure;
mod llm;
mod report;
mod tools;

use clap::{Args, Parser, Subcommand};
use failure::Failure;
use segreport::config::Config;
use segreport::report::GenerationMode;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "segreport", version, about = "Structured CT reports from segmentation masks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `ground_truth_masks` or `automated` (denoise and presence gate).
    #[arg(long, global = true)]
    mode: Option<GenerationMode>,
    /// Cases processed concurrently.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (or file, for `denoise`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Structured report (.report.json and .report.txt) per case manifest.
    Report(report::ReportArgs),
    /// Narrative in the style of example reports, checked for consistency.
    Narrative(llm::NarrativeArgs),
    /// Structured report merged with clinical notes.
    Fuse(llm::FuseArgs),
    /// Sensitivity and specificity per organ and size stratum.
    Evaluate(evaluate::EvaluateArgs),
    /// Synthetic case with analytic ground truth.
    Phantom(tools::PhantomArgs),
    /// Diameters, volume and attenuation of each tumor instance.
    Measure(tools::MeasureArgs),
    /// T stage of the largest pancreatic tumor.
    Stage(tools::StageArgs),
    /// Pancreas head, body and tail masks.
    Subsegment(tools::SubsegmentArgs),
    /// Noise removal on one mask.
    Denoise(tools::DenoiseArgs),
}

impl Global {
    /// Config file with command-line overrides applied.
    fn config(&self) -> Result<Config, Failure> {
        let mut c = match &self.config {
            Some(p) => Config::load(p).map_err(Failure::input)?,
            None => Config::default(),
        };
        if let Some(m) = self.mode {
            c.mode = m;
        }
        if let Some(j) = self.jobs {
            c.jobs = j;
        }
        c.validate().map_err(Failure::input)?;
        Ok(c)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match cli.command {
        Command::Report(a) => report::run(g, a),
        Command::Narrative(a) => llm::narrative(g, a),
        Command::Fuse(a) => llm::fuse(g, a),
        Command::Evaluate(a) => evaluate::run(g, a),
        Command::Phantom(a) => tools::phantom(g, a),
        Command::Measure(a) => tools::measure(g, a),
        Command::Stage(a) => tools::stage(g, a),
        Command::Subsegment(a) => tools::subsegment(g, a),
        Command::Denoise(a) => tools::denoise(g, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
