use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swapbell_cli::commands::{cmd_bell, cmd_optimize, cmd_oracle_check, cmd_polytope, cmd_sweep, ScanRange};
use swapbell_cli::config::{Param, RunConfig};
use swapbell_cli::{transmission_to_km, CliError};

#[derive(Parser, Debug)]
#[command(name = "swapbell", version, about = "Bell tests on heralded entanglement-swapping networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Values shared by every simulation command. Flags override the config file.
#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(short = 'N', long)]
    parties: Option<usize>,
    /// Squeezing, or "optimize".
    #[arg(long, allow_hyphen_values = true)]
    r: Option<Param>,
    #[arg(long, allow_hyphen_values = true)]
    m0: Option<Param>,
    #[arg(long, allow_hyphen_values = true)]
    m1: Option<Param>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Squeezer phases, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    phases: Option<Vec<f64>>,
    #[arg(long)]
    eta_p: Option<f64>,
    #[arg(long)]
    eta_s: Option<f64>,
    #[arg(long)]
    eta_d: Option<f64>,
    #[arg(long)]
    sigma_a: Option<f64>,
    #[arg(long)]
    sigma_theta: Option<f64>,
    #[arg(long)]
    p_dark_s: Option<f64>,
    #[arg(long)]
    p_dark_p: Option<f64>,
    /// Coarse grid points per optimizer axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Optimizer search space: collinear or general.
    #[arg(long)]
    mode: Option<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct SweepArgs {
    /// r, p_d_S, p_d_P, eta_P, eta_S, sigma_A or sigma_theta.
    #[arg(long)]
    axis: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    stop: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Party counts to sweep, comma separated.
    #[arg(long = "sweep-parties", value_delimiter = ',')]
    sweep_parties: Option<Vec<usize>>,
    /// fixed or reoptimize.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bell value, heralding probability and correlators at one point.
    Bell {
        #[command(flatten)]
        common: Common,
        /// Also write the outcome table as CSV.
        #[arg(long)]
        outcomes: Option<PathBuf>,
    },
    /// Optimize squeezing and settings.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Bell value and heralding probability along one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Local-hidden-variable feasibility of an outcome table and its marginals.
    Polytope {
        #[command(flatten)]
        common: Common,
        /// Outcome table CSV (g,n,probability) instead of a simulated one.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Also test marginals of every size from --min-size to --max-size.
        #[arg(long)]
        scan: bool,
        #[arg(long, default_value_t = 1)]
        min_size: usize,
        #[arg(long)]
        max_size: Option<usize>,
    },
    /// Compare the Gaussian pipeline with the truncated Fock-space reference.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long = "r-values", value_delimiter = ',', default_values_t = [0.05, 0.1, 0.15])]
        r_values: Vec<f64>,
    },
    /// Fiber length matching a channel transmission.
    ToKm {
        transmission: f64,
        #[arg(long, default_value_t = 0.3)]
        loss_db_per_km: f64,
    },
}

fn resolve(common: &Common, sweep: Option<&SweepArgs>) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($src:expr => $dst:expr),* $(,)?) => {
            $(if let Some(v) = $src.clone() { $dst = v; })*
        };
    }
    set! {
        common.parties => cfg.parties,
        common.r => cfg.r,
        common.m0 => cfg.m0,
        common.m1 => cfg.m1,
        common.alpha => cfg.alpha,
        common.eta_p => cfg.noise.eta_p,
        common.eta_s => cfg.noise.eta_s,
        common.eta_d => cfg.noise.eta_d,
        common.sigma_a => cfg.noise.sigma_a,
        common.sigma_theta => cfg.noise.sigma_theta,
        common.p_dark_s => cfg.noise.p_dark_s,
        common.p_dark_p => cfg.noise.p_dark_p,
        common.grid => cfg.optimizer.grid,
        common.mode => cfg.optimizer.mode,
    }
    if common.phases.is_some() {
        cfg.phases = common.phases.clone();
    }
    if common.output.is_some() {
        cfg.output = common.output.clone();
    }
    if let Some(s) = sweep {
        if s.axis.is_some() {
            cfg.sweep.axis = s.axis.clone();
        }
        if s.values.is_some() {
            cfg.sweep.values = s.values.clone();
            (cfg.sweep.start, cfg.sweep.stop, cfg.sweep.steps) = (None, None, None);
        }
        if s.start.is_some() || s.stop.is_some() || s.steps.is_some() {
            cfg.sweep.values = None;
            cfg.sweep.start = s.start.or(cfg.sweep.start);
            cfg.sweep.stop = s.stop.or(cfg.sweep.stop);
            cfg.sweep.steps = s.steps.or(cfg.sweep.steps);
        }
        if s.sweep_parties.is_some() {
            cfg.sweep.parties = s.sweep_parties.clone();
        }
        if s.policy.is_some() {
            cfg.sweep.policy = s.policy.clone();
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Bell { common, outcomes } => cmd_bell(&resolve(&common, None)?, outcomes.as_deref()),
        Command::Optimize { common } => cmd_optimize(&resolve(&common, None)?),
        Command::Sweep { common, sweep } => cmd_sweep(&resolve(&common, Some(&sweep))?),
        Command::Polytope { common, table, scan, min_size, max_size } => {
            let range = scan.then_some(ScanRange { min: min_size, max: max_size });
            cmd_polytope(&resolve(&common, None)?, table.as_deref(), range)
        }
        Command::OracleCheck { common, r_values } => cmd_oracle_check(&resolve(&common, None)?, &r_values),
        Command::ToKm { transmission, loss_db_per_km } => {
            let km = transmission_to_km(transmission, loss_db_per_km)?;
            Ok(format!("{km:.3} km\n"))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("swapbell: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
