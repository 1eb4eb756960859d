mod commands;
mod sidecar;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::{execute, Command, Failure};

/// Adapted Wasserstein experiments for one-dimensional SDEs.
///
/// Exit status: 0 success, 1 replay mismatch, 2 configuration error,
/// 3 numerical divergence, 4 acceptance failure.
#[derive(Debug, Parser)]
#[command(name = "adapted-ot", version, args_conflicts_with_subcommands = true)]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "ADAPTED_OT_THREADS")]
    threads: Option<usize>,

    /// Re-run the configuration recorded in a sidecar and check that the
    /// output digest matches.
    #[arg(long, value_name = "SIDECAR")]
    replay: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    }
    if let Some(path) = cli.replay {
        return sidecar::replay(&path);
    }
    let Some(command) = cli.command else {
        return Err(Failure::config("a subcommand or --replay is required (see --help)"));
    };
    if let Command::Selftest(args) = &command {
        return commands::selftest(args);
    }
    let run = execute(&command)?;
    let out = command.out_path().expect("non-selftest commands have an output");
    std::fs::write(out, &run.bytes).map_err(|e| Failure::config(format!("{}: {e}", out.display())))?;
    let meta = sidecar::write(&command, &run)?;
    if !run.summary.is_empty() {
        println!("{}", run.summary);
    }
    println!("wrote {} and {}", out.display(), meta.display());
    Ok(0)
}
