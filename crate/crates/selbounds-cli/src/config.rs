//! Run configuration: a TOML file merged with command-line overrides.
//!
//! Every run is reproducible from (input files, config, seed): the effective
//! configuration is resolved once, before any estimation starts, and the
//! stochastic procedures all draw from the single configured seed.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use selbounds::{CsvSchema, DgpConfig, OutcomeModel, Regime, ResampleScheme, StratumId};
use serde::Deserialize;

use crate::CliError;

/// One input file, keyed by the year it covers.
#[derive(Debug, Clone, Deserialize)]
pub struct InputSpec {
    /// Reporting key for the file (any integer label works).
    pub year: i32,
    /// CSV path, relative to the current directory.
    pub path: PathBuf,
}

/// Optional pre-filter: selected rows with outcomes below the threshold are
/// recoded to unselected before any estimation (the library itself never
/// filters).
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct FilterSpec {
    /// Selected rows with y strictly below this are treated as unselected.
    pub min_outcome: f64,
}

/// Proxy-model grouping settings.
#[derive(Debug, Clone, Deserialize)]
pub struct GroupSpec {
    /// Number of quantile groups (at least 2).
    pub k: usize,
    /// Design terms, e.g. `["age", "age^2", "age*educ"]`.
    pub terms: Vec<String>,
}

/// Which confidence intervals to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiChoice {
    /// Imbens–Manski interval only (analytic or bootstrap SEs).
    Im,
    /// CLR-adjusted bounds and confidence interval only.
    Clr,
    /// Both interval families.
    Both,
}

impl FromStr for CiChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "im" => Ok(CiChoice::Im),
            "clr" => Ok(CiChoice::Clr),
            "both" => Ok(CiChoice::Both),
            other => Err(format!("unknown CI choice `{other}` (use im, clr, or both)")),
        }
    }
}

/// Estimation settings shared by `proportions` and `bounds`.
#[derive(Debug, Clone, Deserialize)]
pub struct EstimationSpec {
    /// Strata to report; defaults to the four estimable ones.
    #[serde(default = "default_strata")]
    pub strata: Vec<String>,
    /// Assumption regime: basic, md0, md1, or md0md1.
    #[serde(default = "default_regime")]
    pub regime: String,
    /// Interval choice: im, clr, or both.
    #[serde(default = "default_ci")]
    pub ci: CiChoice,
    /// Confidence level.
    #[serde(default = "default_level")]
    pub level: f64,
    /// Draws for the CLR critical-value simulation.
    #[serde(default = "default_clr_sims")]
    pub clr_sims: usize,
    /// Bootstrap replicates for strata without closed-form variances.
    #[serde(default)]
    pub bootstrap: Option<usize>,
    /// Master seed; required whenever anything stochastic runs.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Resampling scheme: pooled or by-cell.
    #[serde(default = "default_scheme")]
    pub scheme: String,
}

fn default_strata() -> Vec<String> {
    vec!["T1".into(), "T2".into(), "T4".into(), "T12".into()]
}
fn default_regime() -> String {
    "basic".into()
}
fn default_ci() -> CiChoice {
    CiChoice::Both
}
fn default_level() -> f64 {
    0.95
}
fn default_clr_sims() -> usize {
    100_000
}
fn default_scheme() -> String {
    "pooled".into()
}

impl Default for EstimationSpec {
    fn default() -> Self {
        EstimationSpec {
            strata: default_strata(),
            regime: default_regime(),
            ci: default_ci(),
            level: default_level(),
            clr_sims: default_clr_sims(),
            bootstrap: None,
            seed: None,
            scheme: default_scheme(),
        }
    }
}

/// Output location and formats.
#[derive(Debug, Clone, Deserialize)]
pub struct OutputSpec {
    /// Directory the artifacts are written into (created if missing).
    pub dir: PathBuf,
    /// Any of "tsv", "json", "plotcsv"; defaults to all three.
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_formats() -> Vec<String> {
    vec!["tsv".into(), "json".into(), "plotcsv".into()]
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
            formats: default_formats(),
        }
    }
}

/// Synthetic-data settings for `simulate` and `coverage`.
#[derive(Debug, Clone, Deserialize)]
pub struct SimulateSpec {
    /// Starting preset: "dominance-valid" or "dominance-violated".
    #[serde(default = "default_preset")]
    pub preset: String,
    /// Sample size per draw.
    #[serde(default)]
    pub n: Option<usize>,
    /// Master seed for the draws.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Selection thresholds, overriding the preset when given.
    #[serde(default)]
    pub h01: Option<f64>,
    #[serde(default)]
    pub h00: Option<f64>,
    #[serde(default)]
    pub h10: Option<f64>,
    #[serde(default)]
    pub h11: Option<f64>,
    /// Outcome–selection correlation.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Treatment assignment probability.
    #[serde(default)]
    pub p_treat: Option<f64>,
    /// Instrument assignment probability.
    #[serde(default)]
    pub p_instr: Option<f64>,
    /// Linear-normal outcome coefficients.
    #[serde(default)]
    pub a0: Option<f64>,
    #[serde(default)]
    pub b0: Option<f64>,
    #[serde(default)]
    pub a1: Option<f64>,
    #[serde(default)]
    pub b1: Option<f64>,
    /// Coverage-study replicates.
    #[serde(default)]
    pub reps: Option<usize>,
    /// Latent draws behind the oracle bounds.
    #[serde(default)]
    pub n_oracle: Option<usize>,
    /// Seed for the oracle draw.
    #[serde(default)]
    pub oracle_seed: Option<u64>,
    /// Stratum under study in `coverage`.
    #[serde(default)]
    pub stratum: Option<String>,
}

fn default_preset() -> String {
    "dominance-valid".into()
}

impl Default for SimulateSpec {
    fn default() -> Self {
        SimulateSpec {
            preset: default_preset(),
            n: None,
            seed: None,
            h01: None,
            h00: None,
            h10: None,
            h11: None,
            rho: None,
            p_treat: None,
            p_instr: None,
            a0: None,
            b0: None,
            a1: None,
            b1: None,
            reps: None,
            n_oracle: None,
            oracle_seed: None,
            stratum: None,
        }
    }
}

/// The full run configuration as parsed from TOML.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RunConfig {
    /// Input files, one per year.
    #[serde(default)]
    pub inputs: Vec<InputSpec>,
    /// Column mapping; defaults to literal y,d,z,s,w headers.
    #[serde(default)]
    pub schema: Option<CsvSchema>,
    /// Optional low-outcome pre-filter.
    #[serde(default)]
    pub filter: Option<FilterSpec>,
    /// Optional proxy grouping.
    #[serde(default)]
    pub groups: Option<GroupSpec>,
    /// Estimation settings.
    #[serde(default)]
    pub estimation: EstimationSpec,
    /// Output settings.
    #[serde(default)]
    pub output: OutputSpec,
    /// Simulation settings.
    #[serde(default)]
    pub simulate: SimulateSpec,
}

impl RunConfig {
    /// Reads and parses a TOML config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::config(format!("cannot parse {}: {e}", path.display())))
    }

    /// The effective schema (configured or standard).
    pub fn schema(&self) -> CsvSchema {
        self.schema.clone().unwrap_or_else(CsvSchema::standard)
    }

    /// The configured strata, parsed.
    pub fn strata(&self) -> Result<Vec<StratumId>, CliError> {
        self.estimation
            .strata
            .iter()
            .map(|s| {
                StratumId::from_str(s).map_err(|e| CliError::config(format!("bad stratum: {e}")))
            })
            .collect()
    }

    /// The configured regime, parsed.
    pub fn regime(&self) -> Result<Regime, CliError> {
        Regime::from_str(&self.estimation.regime)
            .map_err(|e| CliError::config(format!("bad regime: {e}")))
    }

    /// The configured resampling scheme, parsed.
    pub fn scheme(&self) -> Result<ResampleScheme, CliError> {
        match self.estimation.scheme.to_ascii_lowercase().as_str() {
            "pooled" => Ok(ResampleScheme::Pooled),
            "by-cell" | "bycell" | "by_cell" => Ok(ResampleScheme::ByCell),
            other => Err(CliError::config(format!(
                "unknown resampling scheme `{other}` (use pooled or by-cell)"
            ))),
        }
    }

    /// Builds the DGP configuration for `simulate`/`coverage`.
    pub fn dgp(&self) -> Result<DgpConfig, CliError> {
        let sim = &self.simulate;
        let mut cfg = match sim.preset.to_ascii_lowercase().as_str() {
            "dominance-valid" | "dominance_valid" => DgpConfig::dominance_valid(),
            "dominance-violated" | "dominance_violated" => DgpConfig::dominance_violated(),
            other => {
                return Err(CliError::config(format!(
                    "unknown preset `{other}` (use dominance-valid or dominance-violated)"
                )))
            }
        };
        if let Some(v) = sim.h01 {
            cfg.h01 = v;
        }
        if let Some(v) = sim.h00 {
            cfg.h00 = v;
        }
        if let Some(v) = sim.h10 {
            cfg.h10 = v;
        }
        if let Some(v) = sim.h11 {
            cfg.h11 = v;
        }
        if let Some(v) = sim.rho {
            cfg.rho = v;
        }
        if let Some(v) = sim.p_treat {
            cfg.p_treat = v;
        }
        if let Some(v) = sim.p_instr {
            cfg.p_instr = v;
        }
        let OutcomeModel::LinearNormal {
            mut a0,
            mut b0,
            mut a1,
            mut b1,
        } = cfg.outcome;
        if let Some(v) = sim.a0 {
            a0 = v;
        }
        if let Some(v) = sim.b0 {
            b0 = v;
        }
        if let Some(v) = sim.a1 {
            a1 = v;
        }
        if let Some(v) = sim.b1 {
            b1 = v;
        }
        cfg.outcome = OutcomeModel::LinearNormal { a0, b0, a1, b1 };
        if let Some(n) = sim.n {
            cfg.n = n;
        }
        let Some(seed) = sim.seed else {
            return Err(CliError::config(
                "simulation needs a seed ([simulate].seed or --seed)".to_string(),
            ));
        };
        cfg.seed = seed;
        Ok(cfg)
    }
}
