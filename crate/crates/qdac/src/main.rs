use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qdac::cli::{self, ExperimentConfig, EXIT_CONFIG};

/// Skill-conditioned constrained actor-critic: training, quality-diversity
/// profiling, few-shot adaptation, hierarchical reuse, and verification.
#[derive(Parser)]
#[command(name = "qdac", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config file (`key = value` lines; unknown keys rejected).
    /// Omitted keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Set any config key, e.g. `--override gamma=0.9`. Repeatable; applied
    /// in order after the config file.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Random seed (shorthand for `--override seed=...`; wins over both).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory root (shorthand for `--override out_dir=...`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Agent mode: qdac, no_sf, plain_sac, fixed_lambda[:l], uvfa[:l]
    /// (shorthand for `--override mode=...`).
    #[arg(long, global = true)]
    mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write the log and checkpoint.
    Train,
    /// Evaluate a checkpoint across the skill grid.
    Profile,
    /// Few-shot skill selection under a perturbation sweep.
    Adapt,
    /// Train a meta-controller on top of a frozen skill policy.
    Hier,
    /// Certify tabular successor-feature bounds on a random corpus.
    Verify,
    /// Finite-difference audit of every analytic gradient.
    Gradcheck,
}

impl Command {
    fn subcommand(&self) -> cli::Subcommand {
        match self {
            Command::Train => cli::Subcommand::Train,
            Command::Profile => cli::Subcommand::Profile,
            Command::Adapt => cli::Subcommand::Adapt,
            Command::Hier => cli::Subcommand::Hier,
            Command::Verify => cli::Subcommand::Verify,
            Command::Gradcheck => cli::Subcommand::Gradcheck,
        }
    }
}

fn build_config(args: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            cli::parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    for entry in &args.overrides {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| format!("override `{entry}` is not of the form key=value"))?;
        cfg.set(key.trim(), value.trim())
            .map_err(|e| format!("override `{entry}`: {e}"))?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    if let Some(mode) = &args.mode {
        cfg.set("mode", mode).map_err(|e| format!("--mode: {e}"))?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let cfg = match build_config(&args) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    ExitCode::from(cli::run(args.command.subcommand(), &cfg) as u8)
}
