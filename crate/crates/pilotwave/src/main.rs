use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pilotwave::scenario::{self, Check, ExecOptions, ScenarioConfig};

#[derive(Parser)]
#[command(name = "pilotwave", version, about = "Pilot-wave scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario config and write its artifacts, report, and
    /// digest manifest.
    Run {
        /// Path to a TOML scenario config.
        config: PathBuf,
        /// Output directory; defaults to the config's output.dir, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Size of the worker pool (numerics are identical for any value).
        #[arg(long)]
        threads: Option<usize>,
        /// Write a field snapshot every this-many propagator steps.
        #[arg(long)]
        snapshot_stride: Option<usize>,
    },
    /// Execute a scenario's checks without writing anything.
    Verify {
        /// Path to a TOML scenario config.
        config: PathBuf,
        /// Size of the worker pool (numerics are identical for any value).
        #[arg(long)]
        threads: Option<usize>,
        /// Snapshot cadence to assume while checking (never written).
        #[arg(long)]
        snapshot_stride: Option<usize>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> pilotwave::Result<bool> {
    match cli.command {
        Command::Run {
            config,
            out,
            threads,
            snapshot_stride,
        } => {
            let cfg = scenario::load_config(&config)?;
            let opts = ExecOptions { snapshot_stride };
            let out_dir = out
                .or_else(|| cfg.out_dir())
                .unwrap_or_else(|| PathBuf::from("out"));
            let summary = with_threads(threads, || scenario::run(&cfg, &out_dir, &opts))?;
            print_checks(&cfg, &summary.checks);
            println!(
                "{} files written to {}",
                summary.files_written,
                out_dir.display()
            );
            Ok(summary.all_passed)
        }
        Command::Verify {
            config,
            threads,
            snapshot_stride,
        } => {
            let cfg = scenario::load_config(&config)?;
            let opts = ExecOptions { snapshot_stride };
            let checks = with_threads(threads, || scenario::verify(&cfg, &opts))?;
            print_checks(&cfg, &checks);
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> pilotwave::Result<T> + Send,
) -> pilotwave::Result<T> {
    match threads {
        None => f(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| pilotwave::Error::Config(format!("--threads: {e}")))?;
            pool.install(f)
        }
    }
}

fn print_checks(cfg: &ScenarioConfig, checks: &[Check]) {
    println!("scenario {} (seed {})", cfg.kind.name(), cfg.seed);
    for c in checks {
        println!(
            "{} {:<28} measured {:>12.5e}  tolerance {:>12.5e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance
        );
    }
}
