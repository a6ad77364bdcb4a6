use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use crossnorm_cli::{run_experiment, ExperimentConfig, ExperimentKind, Overrides};

#[derive(Parser)]
#[command(name = "crossnorm", version, about = "Cross-normalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Online DDPG/TD3 training on the pendulum.
    Train(Flags),
    /// Actor-critic updates from a fixed transition buffer.
    FixedBuffer(Flags),
    /// (alpha, beta) sweep of recentred linear TD(0).
    PhaseDiagram(Flags),
    /// Finite-difference checks of every layer's backward pass.
    NormTest(Flags),
}

#[derive(Args)]
struct Flags {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Agent preset the config starts from.
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    jobs: Option<usize>,
    /// Transition buffer file for fixed-buffer runs.
    #[arg(long)]
    buffer: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(2)
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let (kind, flags) = match cli.command {
        Command::Train(f) => (ExperimentKind::Train, f),
        Command::FixedBuffer(f) => (ExperimentKind::FixedBuffer, f),
        Command::PhaseDiagram(f) => (ExperimentKind::PhaseDiagram, f),
        Command::NormTest(f) => (ExperimentKind::NormTest, f),
    };
    let ov = Overrides {
        kind: Some(kind),
        preset: flags.preset,
        seeds: flags.seed,
        out: flags.out,
        jobs: flags.jobs,
        buffer: flags.buffer,
    };
    let text = match &flags.config {
        Some(p) => {
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?
        }
        None => String::new(),
    };
    let cfg = ExperimentConfig::parse_with(&text, &ov).with_context(|| match &flags.config {
        Some(p) => format!("in {}", p.display()),
        None => "in command-line options".into(),
    })?;
    let outcome = run_experiment(&cfg)?;
    for line in &outcome.summary {
        println!("{}", line);
    }
    println!(
        "wrote {} files to {}",
        outcome.files.len(),
        cfg.out.display()
    );
    Ok(if outcome.failed_cases > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}
