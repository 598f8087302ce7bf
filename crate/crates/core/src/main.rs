use std::path::PathBuf;

use clap::{Parser, Subcommand};
use tensormg::cli::run::{solve_command, verify_command, weights_command};
use tensormg::cli::{Suite, VerifyOptions};

#[derive(Parser)]
#[command(name = "tensormg", version, about = "Low-rank multigrid for parameter-dependent diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a solver experiment and emit its convergence trace as CSV.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run dense oracle checks; exits with 3 on any violation.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Scales the damping used by the smoothing checks.
        #[arg(long, default_value_t = 1.0)]
        omega_factor: f64,
        /// Directory for one CSV report per check.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Emit exponential-sum weights for 1/x on [1, R].
    Weights {
        #[arg(long)]
        k: usize,
        #[arg(long = "R")]
        r: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    tensormg::par::init_from_env();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve { config, out } => solve_command(&config, out.as_deref()),
        Command::Verify {
            suite,
            omega_factor,
            out_dir,
        } => {
            let opts = VerifyOptions {
                omega_factor,
                ..VerifyOptions::default()
            };
            verify_command(suite, &opts, out_dir.as_deref())
        }
        Command::Weights { k, r, out } => weights_command(k, r, out.as_deref()),
    };
    std::process::exit(code);
}
