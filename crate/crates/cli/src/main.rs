use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use qrw_core::{Pipeline, PipelineConfig, Preset, Stage};

/// Train a question rewriter from answer-quality preferences.
#[derive(Parser)]
#[command(name = "qrw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Pipeline TOML; the bundled synthetic setup when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, default_value = "runs/default")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Kqa,
    Truthfulqa,
    Oasst1,
    Synthetic,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Kqa => Preset::Kqa,
            PresetArg::Truthfulqa => Preset::Truthfulqa,
            PresetArg::Oasst1 => Preset::Oasst1,
            PresetArg::Synthetic => Preset::Synthetic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample unique rewrites of each training and validation question.
    Rewrite(RunArgs),
    /// Answer every original question and rewrite.
    Answer(RunArgs),
    /// Score every answer on the preset's criteria.
    Score(RunArgs),
    /// Build preference pairs from rewrites that beat or lose to the original.
    Pair(RunArgs),
    /// Write prompt/chosen/rejected files for external trainers.
    Export(RunArgs),
    /// Warm-start the rewriter and train it on the pairs.
    Train(RunArgs),
    /// Pick the checkpoint with the best validation preference score.
    Select(RunArgs),
    /// Answer and score the evaluation split for each system.
    Evaluate(RunArgs),
    /// Rate question attributes and relate them to the criteria.
    Analyze(RunArgs),
    /// Write the plain-text and tab-separated summary tables.
    Report(RunArgs),
    /// Run every stage in order.
    All(RunArgs),
    /// Print a default config for a preset.
    Config {
        #[arg(long, value_enum, default_value = "synthetic")]
        preset: PresetArg,
    },
}

fn load(args: &RunArgs) -> anyhow::Result<Pipeline> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::synthetic_demo(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Pipeline::new(cfg, &args.out).with_context(|| format!("setting up {}", args.out.display()))
}

fn run_stages(args: &RunArgs, stages: &[Stage]) -> anyhow::Result<()> {
    let pipeline = load(args)?;
    for &stage in stages {
        let record = pipeline.run_stage(stage)?;
        let counts: Vec<String> = record
            .counts
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        println!(
            "{stage}: {} | backend calls {} | cache hits {} misses {} | {} warnings | {} ms",
            counts.join(" "),
            record.backend_calls,
            record.cache.hits,
            record.cache.misses,
            record.warnings.len(),
            record.duration_ms
        );
    }
    if stages.contains(&Stage::Report) {
        print!("{}", std::fs::read_to_string(pipeline.path("report.txt"))?);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Config { preset } => {
            print!("{}", PipelineConfig::for_preset((*preset).into()).to_toml());
            Ok(())
        }
        Command::All(args) => run_stages(args, &Stage::ALL),
        Command::Rewrite(a) => run_stages(a, &[Stage::Rewrite]),
        Command::Answer(a) => run_stages(a, &[Stage::Answer]),
        Command::Score(a) => run_stages(a, &[Stage::Score]),
        Command::Pair(a) => run_stages(a, &[Stage::Pair]),
        Command::Export(a) => run_stages(a, &[Stage::Export]),
        Command::Train(a) => run_stages(a, &[Stage::Train]),
        Command::Select(a) => run_stages(a, &[Stage::Select]),
        Command::Evaluate(a) => run_stages(a, &[Stage::Evaluate]),
        Command::Analyze(a) => run_stages(a, &[Stage::Analyze]),
        Command::Report(a) => run_stages(a, &[Stage::Report]),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
