//! `boxrelax`: asymptotic theory, single-instance decoding and seeded Monte
//! Carlo experiments for the box-relaxation decoder.
//!
//! Exit codes: 0 success, 1 usage or invalid input, 2 runtime failure,
//! 3 completed with warnings (e.g. excluded unconverged trials).

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgGroup, Args, Parser, Subcommand};

use commands::CommandOutcome;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_WARNINGS: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "boxrelax", version, about = "Box-relaxation decoding: theory, decoding and Monte Carlo experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Master seed for all random streams [default: 1, or the config's seed for `simulate`].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving output files.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads: a positive count or `auto` for one per core.
    #[arg(long, global = true, default_value = "auto", value_parser = parse_threads)]
    pub threads: Threads,
    /// Solver tolerance on the projected-gradient residual [default: 1e-10].
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Also write a Python plotting script next to the tables.
    #[arg(long, global = true)]
    pub plot_script: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threads(pub Option<usize>);

fn parse_threads(s: &str) -> Result<Threads, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Threads(None));
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer or `auto`, got `{s}`")),
        Ok(n) => Ok(Threads(Some(n))),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Predicted error statistics at one operating point.
    Theory(TheoryArgs),
    /// Decode one instance read from JSON.
    Decode(DecodeArgs),
    /// Run a campaign described by a JSON config.
    Simulate(SimulateArgs),
    /// Error-count distribution versus its Poisson limit.
    Fig1(Fig1Args),
    /// Exact-recovery probability across the phase transition.
    Phase(PhaseArgs),
    /// Exact-recovery probability across the Gumbel window.
    Gumbel(GumbelArgs),
    /// Leave-one-out surrogate and curvature diagnostics.
    Loo(LooArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("ratio").required(true).args(["delta", "lambda_target"])))]
pub struct TheoryArgs {
    #[arg(long)]
    pub p: usize,
    /// Sampling ratio n / p.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub sigma2: f64,
    /// Solve for the sampling ratio giving this Poisson rate.
    #[arg(long)]
    pub lambda_target: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Instance JSON with fields n, p, sigma2, beta, A (row-major), w.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct Fig1Args {
    #[arg(long, value_delimiter = ',', default_values_t = [200usize, 1000])]
    pub p: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 1.1)]
    pub lambda_target: f64,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct PhaseArgs {
    #[arg(long, default_value_t = 400)]
    pub p: usize,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Phase coordinates [default: 0.4,0.7,1.0,1.4,2.0].
    #[arg(long, value_delimiter = ',', conflicts_with = "sigma2")]
    pub alpha: Vec<f64>,
    /// Noise variances, instead of phase coordinates.
    #[arg(long, value_delimiter = ',')]
    pub sigma2: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct GumbelArgs {
    #[arg(long, default_value_t = 1000)]
    pub p: usize,
    /// Window coordinates.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-1.0, 0.0, 1.0, 2.0])]
    pub x: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct LooArgs {
    #[arg(long, default_value_t = 1000)]
    pub p: usize,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 5)]
    pub instances: usize,
    /// Coordinates sampled per instance.
    #[arg(long, default_value_t = 20)]
    pub coords: usize,
    /// Points of the v grid on [-2, 2]; 0 skips the curves.
    #[arg(long, default_value_t = 17)]
    pub v_points: usize,
}

fn exit_code_for(err: &boxrelax::Error) -> u8 {
    use boxrelax::Error::*;
    match err {
        Config(_) | Domain(_) | TargetOutOfRange(_) | Json(_) => EXIT_USAGE,
        Bracket(_) | NotConverged(_) | Undefined(_) | Io { .. } | Csv(_) => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match commands::run(&cli) {
        Ok(outcome) => report(&outcome),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn report(outcome: &CommandOutcome) -> ExitCode {
    println!("{}", outcome.summary_text.trim_end());
    for path in &outcome.artifacts_written {
        eprintln!("wrote {}", path.display());
    }
    ExitCode::from(outcome.exit_code)
}
