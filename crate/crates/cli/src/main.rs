//! `lyap`: command-line front end for the Lyapunov exponent toolkit.
//!
//! Exit status is 0 on success, 2 when the input is rejected and 1 when a
//! numerical procedure fails. `LYAP_THREADS` caps the worker pool.

mod config;
mod error;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{Command, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "lyap", version, about = "Top Lyapunov exponent of random Ising transfer-matrix products")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Disorder model JSON document.
    #[arg(long = "model")]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Matrix-product Monte Carlo estimate for each epsilon.
    Mc {
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        batches: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Histogram of the projective chain at a given k.
    Chain {
        #[arg(long)]
        k: f64,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        burn_in: Option<u64>,
        #[arg(long = "hist-out", alias = "out")]
        hist_out: Option<PathBuf>,
        #[arg(long)]
        json_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Invariant tail from the transfer operator.
    Operator {
        #[arg(long)]
        k: f64,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Slope-normalized invariant measure of one edge chain.
    Edge {
        #[arg(long, value_parser = ["left", "right"], default_value = "left")]
        side: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Glued approximation per k, or the edge constants with `dh constants`.
    Dh {
        #[arg(value_enum)]
        action: Option<DhAction>,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Weak-disorder closed form `1 / (4 (log(1/eps) - log 2 - gamma))`.
    Wd {
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        eps: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every route to the exponent side by side.
    Compare {
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<f64>>,
        #[arg(long)]
        mc_steps: Option<u64>,
        #[arg(long)]
        chain_steps: Option<u64>,
        #[arg(long)]
        burn_in: Option<u64>,
        #[arg(long)]
        batches: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Invariant density against the two edge densities.
    Fig2 {
        #[arg(long)]
        k: Option<f64>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        window: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Runs a JSON configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DhAction {
    Constants,
}

fn base(command: Command, common: Common, out: Option<PathBuf>) -> RunConfig {
    let mut cfg = RunConfig::new(command);
    cfg.model_path = common.model;
    cfg.seed = common.seed;
    cfg.output_path = out;
    cfg
}

impl Cmd {
    fn into_config(self) -> Result<RunConfig, CliError> {
        Ok(match self {
            Cmd::Mc { eps, steps, batches, out, common } => {
                let mut c = base(Command::Mc, common, out);
                (c.eps, c.steps, c.batches) = (Some(eps), steps, batches);
                c
            }
            Cmd::Chain { k, steps, burn_in, hist_out, json_out, common } => {
                let mut c = base(Command::Chain, common, hist_out);
                (c.k, c.steps, c.burn_in, c.json_output_path) = (Some(vec![k]), steps, burn_in, json_out);
                c
            }
            Cmd::Operator { k, tol, out, json_out, common } => {
                let mut c = base(Command::Operator, common, out);
                (c.k, c.tol, c.json_output_path) = (Some(vec![k]), tol, json_out);
                c
            }
            Cmd::Edge { side, out, json_out, common } => {
                let mut c = base(Command::Edge, common, out);
                (c.side, c.json_output_path) = (Some(side), json_out);
                c
            }
            Cmd::Dh { action, k, out, json_out, common } => {
                let mut c = base(Command::Dh, common, out);
                (c.k, c.json_output_path, c.constants) = (k, json_out, action.is_some());
                c
            }
            Cmd::Wd { eps, out } => {
                let mut c = RunConfig::new(Command::Wd);
                (c.eps, c.output_path) = (Some(eps), out);
                c
            }
            Cmd::Compare { k, mc_steps, chain_steps, burn_in, batches, tol, out, common } => {
                let mut c = base(Command::Compare, common, out);
                (c.k, c.mc_steps, c.chain_steps, c.burn_in, c.batches, c.tol) = (k, mc_steps, chain_steps, burn_in, batches, tol);
                c
            }
            Cmd::Fig2 { k, window, out, common } => {
                let mut c = base(Command::Fig2, common, out);
                c.k = k.map(|k| vec![k]);
                c.window = window.map(|w| [w[0], w[1]]);
                c
            }
            Cmd::Run { config } => RunConfig::from_file(&config)?,
        })
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("LYAP_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Validation(format!("LYAP_THREADS: expected a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Validation(format!("LYAP_THREADS: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| cli.command.into_config()).and_then(|cfg| run::dispatch(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
