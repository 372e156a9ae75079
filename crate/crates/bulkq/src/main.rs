use std::path::PathBuf;
use std::process::ExitCode;

use bulkq::{parse_config, resolve_out_dir, run, Command, RunError, RunOptions};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Solve,
    Simulate,
    Spectral,
    Verify,
}

/// Transient analysis of the M(t)|M[k,B]|1 bulk queue.
#[derive(Debug, Parser)]
#[command(name = "bulkq", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// Scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the scenario's `out`, then $BULKQ_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replications and sweeps.
    #[arg(long)]
    threads: Option<usize>,
    /// Write the assembled operators as sparse triplets (spectral).
    #[arg(long)]
    dump_operators: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let scenario = match parse_config(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions { out: resolve_out_dir(cli.out, &scenario), dump_operators: cli.dump_operators };
    let command = match cli.command {
        Sub::Solve => Command::Solve,
        Sub::Simulate => Command::Simulate,
        Sub::Spectral => Command::Spectral,
        Sub::Verify => Command::Verify,
    };

    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(command, &scenario, &opts)),
            Err(e) => {
                eprintln!("error: thread pool: {e}");
                return ExitCode::from(3);
            }
        },
        None => run(command, &scenario, &opts),
    };
    match result {
        Ok(outcome) => {
            for c in &outcome.checks {
                println!("{c}");
            }
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for a in &outcome.artifacts {
                eprintln!("wrote {}", a.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &RunError) -> u8 {
    e.exit_code() as u8
}
