//! Batch experiment runner: `twinheat <command> --config run.json`.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{Outcome, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, EXIT_TOLERANCE};
pub use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(
    name = "twinheat",
    version,
    about = "Simultaneous Dirichlet/Neumann heat control experiments"
)]
pub struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `output_dir` of the config.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Overrides `seed` of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Checks the doubled-domain identities.
    DoubleCheck,
    /// Estimates spectral-inequality constants over `lambda_sweep`.
    Specineq,
    /// Runs the simultaneous null-control experiment.
    Control,
    /// Writes a fat Cantor mask.
    Fatcantor,
    /// Evolves the initial pairs without control.
    Simulate,
}

/// Loads the config, applies flag overrides and runs the command.
pub fn run(cli: &Cli) -> Outcome {
    let fail = |code, message: String| Outcome { code, message };
    let Some(path) = &cli.config else {
        return fail(EXIT_CONFIG, "--config is required".into());
    };
    let mut cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => return fail(commands::exit_code(&e), e.to_string()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = Some(dir.clone());
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return fail(EXIT_CONFIG, "--threads must be positive".into());
        }
        // Only the first pool configuration in a process takes effect.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let out = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("output"));
    let result = match cli.command {
        Command::DoubleCheck => commands::cmd_double_check(&cfg, &out),
        Command::Specineq => commands::cmd_specineq(&cfg, &out),
        Command::Control => commands::cmd_control(&cfg, &out),
        Command::Simulate => commands::cmd_simulate(&cfg, &out),
        Command::Fatcantor => commands::cmd_fatcantor(&cfg, &out),
    };
    result.unwrap_or_else(|e| fail(commands::exit_code(&e), e.to_string()))
}
