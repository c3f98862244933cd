mod output;

use anyhow::Context;
use clap::{Parser, Subcommand};
use phe2::config::load_config;
use phe2::pipeline::{run_pipeline, PipelineError, Stage};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "phe2", version, about = "Experiments on perturbed expanding torus maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated stage list (only with `all`); dependencies are added automatically.
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<String>>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Cone, area and C^2 certificates.
    Certify(RunArgs),
    /// Semi-conjugacy to the linear model and the conjugacy verdict.
    Semiconj(RunArgs),
    /// Unstable and center leaves, product structure, rotation numbers.
    Foliation(RunArgs),
    /// Periodic orbits and their multipliers.
    Periodic(RunArgs),
    /// Periodic-data rigidity and the Livschitz diagnostics.
    Rigidity(RunArgs),
    /// Cohomological equation over the irrational rotation.
    Cohomology(RunArgs),
    /// Exact eigenvalue power check.
    Spectral(RunArgs),
    /// Every stage (or those given with --stages).
    All(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(alarms) => {
            eprintln!("{alarms} alarm(s) raised; see report.json");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<usize> {
    let (stage, args) = match cli.command {
        Command::Certify(a) => (Some(Stage::Certify), a),
        Command::Semiconj(a) => (Some(Stage::Semiconj), a),
        Command::Foliation(a) => (Some(Stage::Foliation), a),
        Command::Periodic(a) => (Some(Stage::Periodic), a),
        Command::Rigidity(a) => (Some(Stage::Rigidity), a),
        Command::Cohomology(a) => (Some(Stage::Cohomology), a),
        Command::Spectral(a) => (Some(Stage::Spectral), a),
        Command::All(a) => (None, a),
    };
    let stages = match (stage, &args.stages) {
        (Some(_), Some(_)) => anyhow::bail!("--stages is only accepted by `all`"),
        (Some(s), None) => vec![s],
        (None, None) => Stage::ALL.to_vec(),
        (None, Some(names)) => names
            .iter()
            .map(|n| Stage::parse(n.trim()).with_context(|| format!("unknown stage `{n}`")))
            .collect::<anyhow::Result<Vec<_>>>()?,
    };
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    match run_pipeline(&config, &stages) {
        Ok((report, art)) => {
            output::write_all(&args.out, &config, &report, &art)?;
            for a in &report.alarms {
                eprintln!("alarm [{}]: {}", a.stage.name(), a.message);
            }
            Ok(report.alarms.len())
        }
        Err(PipelineError::StageFailed { stage, message, alarms }) => {
            output::write_failure(&args.out, &config, stage, &message, &alarms)?;
            anyhow::bail!("stage {} failed: {message}", stage.name())
        }
        Err(e) => Err(e.into()),
    }
}
