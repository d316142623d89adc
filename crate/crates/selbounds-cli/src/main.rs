//! `selbounds` — estimation of principal-stratum treatment-effect bounds
//! under sample selection, from the command line.
//!
//! The binary wraps the `selbounds` library in five subcommands:
//!
//! * `validate` — load inputs and print dataset diagnostics;
//! * `proportions` — estimate the five stratum shares;
//! * `bounds` — per-stratum ATE bounds with inference (the main pipeline);
//! * `simulate` — draw one synthetic dataset with its latent truth;
//! * `coverage` — Monte Carlo coverage study on the synthetic DGP.
//!
//! Runs are configured by a TOML file (`--config`) with command-line flags
//! overriding individual settings. Exit codes: 0 on success, 1 when some
//! estimation tasks failed (partial artifacts are still written), 2 on
//! configuration or input errors (a JSON error report goes to stderr).

mod config;
mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{CiChoice, FilterSpec, InputSpec, RunConfig};

/// A CLI failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The configuration (file or flags) is unusable. Exit 2.
    #[error("{0}")]
    Config(String),
    /// An input file is missing or malformed. Exit 2.
    #[error("{0}")]
    Input(String),
    /// At least one estimation task failed; artifacts for the rest were
    /// written. Exit 1.
    #[error("{0}")]
    Estimation(String),
}

impl CliError {
    /// A configuration error.
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// An input error.
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    /// An estimation error.
    pub fn estimation(msg: impl Into<String>) -> Self {
        CliError::Estimation(msg.into())
    }

    /// Machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Input(_) => "input",
            CliError::Estimation(_) => "estimation",
        }
    }

    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Estimation(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "selbounds",
    version,
    about = "Principal-stratum treatment-effect bounds under sample selection"
)]
struct Cli {
    /// TOML run configuration (flags override individual settings).
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the inputs and print dataset diagnostics without estimating.
    Validate {
        #[command(flatten)]
        input: InputArgs,
        /// Fail (exit 1) on monotonicity violations or negative shares.
        #[arg(long)]
        strict: bool,
    },
    /// Estimate the five stratum proportions per year (and per group).
    Proportions {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        est: EstArgs,
        /// Master seed for every stochastic step.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate per-stratum ATE bounds with inference.
    Bounds {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        est: EstArgs,
        /// Master seed for every stochastic step.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw one synthetic dataset and write it with its latent truth.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Output directory (default from config, then ./out).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo coverage study on the synthetic DGP.
    Coverage {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        est: EstArgs,
        /// Replicates of the study (at least 200).
        #[arg(long)]
        reps: Option<usize>,
        /// Stratum under study (default T1).
        #[arg(long)]
        stratum: Option<String>,
        /// Latent draws behind the oracle bounds (default 1000000).
        #[arg(long)]
        n_oracle: Option<usize>,
        /// Seed of the oracle draw (default derived from the DGP seed).
        #[arg(long)]
        oracle_seed: Option<u64>,
        /// Seed of the estimation steps (default derived from the DGP seed).
        #[arg(long)]
        inference_seed: Option<u64>,
    },
}

/// Input-selection flags shared by the data-driven commands.
#[derive(Args)]
struct InputArgs {
    /// Input file as YEAR=PATH (repeatable; replaces configured inputs).
    #[arg(long = "input", value_name = "YEAR=PATH")]
    inputs: Vec<String>,
    /// Recode selected rows with outcomes below this value as unselected.
    #[arg(long, value_name = "Y")]
    min_outcome: Option<f64>,
}

/// Estimation flags shared by `proportions`, `bounds`, and `coverage`.
#[derive(Args)]
struct EstArgs {
    /// Strata to estimate, comma separated (e.g. T1,T2,T4,T12).
    #[arg(long, value_delimiter = ',', value_name = "STRATA")]
    strata: Vec<String>,
    /// Assumption regime: basic, md0, md1, or md0md1.
    #[arg(long)]
    regime: Option<String>,
    /// Confidence intervals: im, clr, or both.
    #[arg(long)]
    ci: Option<String>,
    /// Confidence level in (0, 1).
    #[arg(long)]
    level: Option<f64>,
    /// Draws for the CLR critical-value simulation (at least 10000).
    #[arg(long)]
    sims: Option<usize>,
    /// Bootstrap replicates (at least 100); enables bootstrap SEs.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Bootstrap resampling scheme: pooled or by-cell.
    #[arg(long)]
    scheme: Option<String>,
    /// Split the analysis by proxy-quantile covariate groups.
    #[arg(long)]
    by_groups: bool,
    /// Output directory (default from config, then ./out).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// Simulation flags shared by `simulate` and `coverage`.
#[derive(Args)]
struct SimArgs {
    /// DGP preset: dominance-valid or dominance-violated.
    #[arg(long)]
    preset: Option<String>,
    /// Sample size per draw.
    #[arg(long)]
    n: Option<usize>,
    /// Seed of the data-generating process.
    #[arg(long)]
    seed: Option<u64>,
}

/// Loads the config file (or the default config) and applies flag overrides.
fn base_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Parses a repeatable `--input YEAR=PATH` flag.
fn parse_inputs(raw: &[String]) -> Result<Vec<InputSpec>, CliError> {
    raw.iter()
        .map(|s| {
            let (year, path) = s.split_once('=').ok_or_else(|| {
                CliError::config(format!("--input takes YEAR=PATH, got `{s}`"))
            })?;
            let year: i32 = year
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("bad year in --input `{s}`")))?;
            Ok(InputSpec {
                year,
                path: PathBuf::from(path),
            })
        })
        .collect()
}

/// Applies input flags onto the config.
fn apply_input_args(cfg: &mut RunConfig, args: &InputArgs) -> Result<(), CliError> {
    if !args.inputs.is_empty() {
        cfg.inputs = parse_inputs(&args.inputs)?;
    }
    if let Some(thr) = args.min_outcome {
        cfg.filter = Some(FilterSpec { min_outcome: thr });
    }
    Ok(())
}

/// Applies estimation flags onto the config.
fn apply_est_args(cfg: &mut RunConfig, args: &EstArgs) -> Result<(), CliError> {
    if !args.strata.is_empty() {
        cfg.estimation.strata = args.strata.clone();
    }
    if let Some(r) = &args.regime {
        cfg.estimation.regime = r.clone();
    }
    if let Some(c) = &args.ci {
        cfg.estimation.ci = c.parse::<CiChoice>().map_err(CliError::config)?;
    }
    if let Some(l) = args.level {
        cfg.estimation.level = l;
    }
    if let Some(s) = args.sims {
        cfg.estimation.clr_sims = s;
    }
    if let Some(b) = args.bootstrap {
        cfg.estimation.bootstrap = Some(b);
    }
    if let Some(s) = &args.scheme {
        cfg.estimation.scheme = s.clone();
    }
    if let Some(dir) = &args.out {
        cfg.output.dir = dir.clone();
    }
    Ok(())
}

/// Applies simulation flags onto the config.
fn apply_sim_args(cfg: &mut RunConfig, args: &SimArgs) {
    if let Some(p) = &args.preset {
        cfg.simulate.preset = p.clone();
    }
    if let Some(n) = args.n {
        cfg.simulate.n = Some(n);
    }
    if let Some(s) = args.seed {
        cfg.simulate.seed = Some(s);
    }
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    let mut cfg = base_config(cli.config.as_ref())?;
    match &cli.command {
        Command::Validate { input, strict } => {
            apply_input_args(&mut cfg, input)?;
            run::cmd_validate(&cfg, *strict)
        }
        Command::Proportions { input, est, seed } => {
            apply_input_args(&mut cfg, input)?;
            apply_est_args(&mut cfg, est)?;
            if let Some(s) = seed {
                cfg.estimation.seed = Some(*s);
            }
            run::cmd_proportions(&cfg, est.by_groups)
        }
        Command::Bounds { input, est, seed } => {
            apply_input_args(&mut cfg, input)?;
            apply_est_args(&mut cfg, est)?;
            if let Some(s) = seed {
                cfg.estimation.seed = Some(*s);
            }
            run::cmd_bounds(&cfg, est.by_groups)
        }
        Command::Simulate { sim, out } => {
            apply_sim_args(&mut cfg, sim);
            if let Some(dir) = out {
                cfg.output.dir = dir.clone();
            }
            run::cmd_simulate(&cfg)
        }
        Command::Coverage {
            sim,
            est,
            reps,
            stratum,
            n_oracle,
            oracle_seed,
            inference_seed,
        } => {
            apply_sim_args(&mut cfg, sim);
            apply_est_args(&mut cfg, est)?;
            if let Some(r) = reps {
                cfg.simulate.reps = Some(*r);
            }
            if let Some(s) = stratum {
                cfg.simulate.stratum = Some(s.clone());
            }
            if let Some(n) = n_oracle {
                cfg.simulate.n_oracle = Some(*n);
            }
            if let Some(s) = oracle_seed {
                cfg.simulate.oracle_seed = Some(*s);
            }
            if let Some(s) = inference_seed {
                cfg.estimation.seed = Some(*s);
            }
            run::cmd_coverage(&cfg)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => {}
        Err(e) => {
            let report = json!({"kind": e.kind(), "message": e.to_string()});
            eprintln!("{report}");
            std::process::exit(e.exit_code());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_flags_parse_year_and_path() {
        let specs = parse_inputs(&["2008=a/b.csv".to_string(), "2011=c.csv".to_string()]).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].year, 2008);
        assert_eq!(specs[0].path, PathBuf::from("a/b.csv"));
        assert!(parse_inputs(&["nope".to_string()]).is_err());
        assert!(parse_inputs(&["x=y.csv".to_string()]).is_err());
    }

    #[test]
    fn exit_codes_match_error_kinds() {
        assert_eq!(CliError::config("x").exit_code(), 2);
        assert_eq!(CliError::input("x").exit_code(), 2);
        assert_eq!(CliError::estimation("x").exit_code(), 1);
        assert_eq!(CliError::config("x").kind(), "config");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
