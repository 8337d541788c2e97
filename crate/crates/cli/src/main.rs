use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsasym_core::runner::inspect::{inspect, View};
use nsasym_core::runner::{run, verify_dir, Outcome, RunError, EXIT_CONFIG};

/// Large-time asymptotics of 2-D Navier-Stokes flow: simulate, extract the
/// expansion coefficients and check the predicted decay.
#[derive(Parser)]
#[command(name = "nsasym", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Print a snapshot, coefficient table or report.
    Inspect {
        path: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        /// Axis of the `--field` slice.
        #[arg(long, default_value_t = 0, requires = "field")]
        axis: usize,
    },
    /// Re-run every check on an existing run directory.
    Verify { run_dir: PathBuf },
}

#[derive(Args)]
#[group(multiple = false)]
struct ViewArgs {
    /// Slice a snapshot through the box centre along `--axis`.
    #[arg(long)]
    field: bool,
    /// Coefficient table as CSV.
    #[arg(long)]
    coeffs: bool,
    /// Decay fits of a report.
    #[arg(long)]
    fits: bool,
}

impl ViewArgs {
    fn view(&self, axis: usize) -> View {
        if self.field {
            View::Field { axis }
        } else if self.coeffs {
            View::Coeffs
        } else if self.fits {
            View::Fits
        } else {
            View::Auto
        }
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("NSASYM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| format!("NSASYM_THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err("NSASYM_THREADS must be at least 1".into());
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    Ok(())
}

fn finish(result: Result<Outcome, RunError>) -> ExitCode {
    match result {
        Ok(outcome) => {
            let r = &outcome.report;
            let failed = r.failures();
            println!(
                "{}: {} checks, {} failed; results in {}",
                r.name,
                r.checks.iter().filter(|c| c.asserted).count(),
                failed.len(),
                outcome.dir.display()
            );
            for c in failed {
                println!("FAIL {} = {:.6e}", c.name, c.value);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    match cli.command {
        Command::Run { config } => finish(run(&config)),
        Command::Verify { run_dir } => finish(verify_dir(&run_dir)),
        Command::Inspect { path, view, axis } => match inspect(&path, view.view(axis)) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG as u8)
            }
        },
    }
}
