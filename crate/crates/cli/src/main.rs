use std::env;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mechsim::verify::VerifyOptions;

mod commands;

#[derive(Parser)]
#[command(
    name = "mechsim",
    version,
    about = "Adaptive mechanism design in matrix-game social dilemmas"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and write per-run and aggregate CSVs.
    Run {
        /// Config file of `key = value` lines; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: $MECHSIM_OUT, then the working dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Config overrides of the form --key=value, applied in order.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Recreate a published table or figure next to fresh measurements.
    Reproduce {
        /// One of: t4, t5, fig1, fig2.
        target: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the self-check suite: gradient oracles, estimator bias,
    /// structural invariants.
    Verify {
        /// Relative tolerance for the finite-difference sweeps.
        #[arg(long, default_value_t = 1e-4)]
        fd_tol: f64,
        /// Sample count per Monte Carlo check.
        #[arg(long, default_value_t = 100_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a cartesian grid: each trailing key=v1,v2,... spec is one axis.
    /// Values are split on commas, so list-valued keys take one seed per
    /// grid point here.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        specs: Vec<String>,
    },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| env::var_os("MECHSIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn dispatch(cli: Cli) -> mechsim::Result<i32> {
    match cli.cmd {
        Cmd::Run { config, out, overrides } => {
            commands::cmd_run(config.as_deref(), &overrides, &out_dir(out))
        }
        Cmd::Reproduce { target, out } => commands::cmd_reproduce(&target, &out_dir(out)),
        Cmd::Verify { fd_tol, mc_samples, seed } => {
            Ok(commands::cmd_verify(&VerifyOptions { fd_tol, mc_samples, seed }))
        }
        Cmd::Sweep { config, out, specs } => {
            commands::cmd_sweep(config.as_deref(), &specs, &out_dir(out))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
