//! Experiment runner: turns JSON configurations into asymmetry reports,
//! sweeps, fits and oracle cross-checks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical error,
//! 4 refusal on a non-clustering state.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod oracle_check;

use std::ffi::OsString;
use std::path::PathBuf;

use asymmetry_core::Error;
use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_compute, cmd_fit, cmd_state_info, cmd_sweep, compute_reports};
pub use config::{ExperimentConfig, Overrides};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CLUSTERING: i32 = 4;

/// Environment variable selecting the log level (`error`, `info`, `debug`).
pub const LOG_ENV: &str = "ASYMMETRY_KIT_LOG";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(Error),
    Io(String),
    /// Oracle cross-checks ran but some failed.
    ChecksFailed(usize),
}

impl CliError {
    /// Core errors raised while interpreting configuration data.
    pub fn from_config(e: Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) | CliError::ChecksFailed(_) => EXIT_NUMERICAL,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

/// Exit class of a library error.
pub fn core_exit_code(e: &Error) -> i32 {
    match e {
        Error::NonClustering(_) | Error::DegenerateLeading(_) => EXIT_CLUSTERING,
        Error::BadParam(_)
        | Error::Serde(_)
        | Error::BadGenerators(_)
        | Error::NonUnitary(_)
        | Error::OrderExceeded(_)
        | Error::ProductNotIdentity(_)
        | Error::NonAbelian
        | Error::TermCapExceeded { .. }
        | Error::CriticalRegime(_)
        | Error::Shape(_)
        | Error::CapExceeded { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::ChecksFailed(k) => write!(f, "{k} oracle checks failed"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "asymmetry-kit", version, about = "Entanglement asymmetry of uniform matrix product states")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Monte Carlo seed, overriding `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tolerance override `key=value`, repeatable.
    #[arg(long = "tol", value_parser = parse_tol)]
    pub tol: Vec<(String, f64)>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Asymmetry reports (CSV + JSON) for every replica index in the config.
    Compute(RunArgs),
    /// Resumable sweep over XXZ anisotropies into one CSV.
    Sweep(RunArgs),
    /// Fit a report with `exponential_to_constant` or `log_slope`.
    Fit {
        /// Report JSON written by `compute`.
        #[arg(long)]
        report: PathBuf,
        /// `exponential_to_constant` or `log_slope`.
        #[arg(long)]
        model: String,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check the transfer-operator pipeline against brute force.
    OracleCheck {
        /// Random tensors to compare.
        #[arg(long, default_value_t = 50)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ring length of the brute-force reference.
        #[arg(long, default_value_t = 30)]
        sites: usize,
    },
    /// Clustering report and symmetric subgroup of a state.
    StateInfo {
        /// Take state and group from an experiment config.
        #[arg(long, conflicts_with = "state")]
        config: Option<PathBuf>,
        /// State descriptor JSON, e.g. '{"state": "aklt"}'.
        #[arg(long)]
        state: Option<String>,
        /// Group descriptor JSON.
        #[arg(long)]
        group: Option<String>,
    },
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let v: f64 = v.parse().map_err(|e| format!("bad tolerance value {v:?}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "error");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn load_run(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply(&Overrides { out: args.out.clone(), seed: args.seed, tolerances: args.tol.clone() });
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Compute(args) => {
            let cfg = load_run(&args)?;
            for path in cmd_compute(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Sweep(args) => {
            let cfg = load_run(&args)?;
            let outcome = cmd_sweep(&cfg)?;
            if outcome.failed_cells > 0 {
                log::warn!("{} sweep cells failed; see the status column", outcome.failed_cells);
            }
            println!("{}", outcome.csv.display());
        }
        Command::Fit { report, model, out } => {
            let fit = cmd_fit(&report, &model)?;
            let text = serde_json::to_string_pretty(&fit).expect("plain data");
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
                None => println!("{text}"),
            }
        }
        Command::OracleCheck { cases, seed, sites } => {
            let lines = oracle_check::run_all(cases, seed, sites)?;
            let failed = lines.iter().filter(|l| !l.passed).count();
            for l in &lines {
                println!("{l}");
            }
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
        }
        Command::StateInfo { config, state, group } => {
            let (state, group) = match (config, state) {
                (Some(p), _) => {
                    let cfg = ExperimentConfig::load(&p)?;
                    (cfg.state.clone(), cfg.group.clone())
                }
                (None, Some(s)) => {
                    let st = serde_json::from_str(&s).map_err(|e| CliError::Config(format!("state: {e}")))?;
                    let g = group
                        .map(|g| serde_json::from_str(&g).map_err(|e| CliError::Config(format!("group: {e}"))))
                        .transpose()?;
                    (st, g)
                }
                (None, None) => return Err(CliError::Config("state-info needs --config or --state".into())),
            };
            let info = cmd_state_info(&state, group.as_ref())?;
            println!("{}", serde_json::to_string_pretty(&info).expect("plain data"));
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("configuration error: --threads must be positive");
            return EXIT_CONFIG;
        }
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start thread pool: {e}");
            return EXIT_NUMERICAL;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
