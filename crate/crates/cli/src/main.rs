use clap::{Parser, Subcommand};
use histcircle_cli::{load_config, run, Command, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

/// Experiments on random expanding circle maps with historic behaviour.
///
/// Exit status: 0 success, 1 validation failure, 2 budget exceeded, 3 I/O.
#[derive(Parser)]
#[command(name = "histcircle", version)]
struct Cli {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for s″ and for sampled words, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Recompute everything instead of reading the result cache.
    #[arg(long, global = true)]
    no_cache: bool,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Check the hypotheses on the family parameters.
    Validate,
    /// Conjugacy grid at omega0 and its residual.
    Conjugacy,
    /// Markov partition at omega0 and the gap arcs.
    Partition,
    /// Cylinders of sampled words and decoding checks.
    Code,
    /// Block schedule, I* and the oscillating Birkhoff averages.
    Historic,
    /// Past-orbit histogram and shadowing distances.
    Density,
    /// Sub-alpha and super-beta witnesses along the past orbit.
    Witness,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Sub::Validate => Command::Validate,
        Sub::Conjugacy => Command::Conjugacy,
        Sub::Partition => Command::Partition,
        Sub::Code => Command::Code,
        Sub::Historic => Command::Historic,
        Sub::Density => Command::Density,
        Sub::Witness => Command::Witness,
    };
    let config = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let opts = RunOptions {
        out: cli.out,
        seed: cli.seed,
        workers: cli.workers,
        no_cache: cli.no_cache,
    };
    let manifest = run(command, config, &opts);
    for o in &manifest.outcomes {
        println!("{:<20} {:<4} {}", o.name, if o.passed { "ok" } else { "FAIL" }, o.detail);
    }
    for s in &manifest.stages {
        println!("stage {:<14} {:>9.3}s{}", s.name, s.seconds, if s.cached { " (cached)" } else { "" });
    }
    if let Some(e) = &manifest.error {
        eprintln!("error: {e}");
    }
    ExitCode::from(manifest.exit_code as u8)
}
