use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedhybrid::config::Config;
use fedhybrid::experiment::{run_experiment, verify, Overrides};
use fedhybrid::simnet::Executor;
use fedhybrid::Error;

#[derive(Parser)]
#[command(version, about = "Hybrid primal-dual federated optimization runner")]
#[command(
    after_help = "Worker threads are read from the FEDHYBRID_THREADS environment variable (default: 1, sequential)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method and write CSV traces plus a manifest.
    Run(Common),
    /// Check curvature bounds, dual derivatives and descent monitors.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
}

fn failure_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Run(args) | Command::Verify(args)) = &cli.command;
    let mut cfg = match Config::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let overrides = Overrides {
        seed: args.seed,
        out: args.out.clone(),
        iters: args.iters,
    };
    overrides.apply(&mut cfg);
    let exec = match Executor::from_env() {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match cli.command {
        Command::Run(_) => match run_experiment(&cfg, &overrides, &exec) {
            Ok(s) => {
                for t in &s.traces {
                    let last = t.rows.last();
                    println!(
                        "{:<12} rows={:<6} fun_gap={:.3e} consensus_err={:.3e}",
                        t.method.name(),
                        t.rows.len(),
                        last.map_or(f64::NAN, |r| r.fun_gap),
                        last.map_or(f64::NAN, |r| r.consensus_err),
                    );
                }
                println!("manifest: {}", s.manifest.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(failure_code(&e))
            }
        },
        Command::Verify(_) => match verify(&cfg, &exec) {
            Ok(report) => {
                println!("{report}");
                if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(failure_code(&e))
            }
        },
    }
}
