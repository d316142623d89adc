//! Covariate-group bounds: a regression proxy, quantile groups, per-group
//! pipelines, and mass-weighted aggregation.
//!
//! Bounds conditional on covariates are tighter than the pooled bounds but
//! cannot condition on a continuous covariate vector directly. The standard
//! device (Lee 2009) is a scalar proxy — the linear prediction of the
//! outcome from the covariates — whose weighted quantiles split the sample
//! into groups. Every group runs the full pipeline independently, and the
//! per-group intervals average back into a population bound with the groups'
//! weighted masses.
//!
//! The proxy is fit on selected rows (outcomes are unobserved otherwise) and
//! evaluated for every row, so unselected observations are grouped too.
//! Aggregation uses the plain intersection bounds; per-group CLR adjustments
//! do not average into a population-level adjusted bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{Interval, Regime, TypeBounds};
use crate::data::Dataset;
use crate::dominance::bounds_for_regime;
use crate::error::{Error, Result};
use crate::inference::{ate_inference, AteInference, InferenceConfig};
use crate::strata::{stratum_proportions, StratumId};
use crate::trimming::WeightedSample;

/// One column of the regression design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    /// A covariate raised to an integer power (power 1 is the main term).
    Power {
        /// Covariate name.
        name: String,
        /// Exponent, at least 1.
        exponent: u32,
    },
    /// The product of two covariates.
    Interaction {
        /// First covariate name.
        a: String,
        /// Second covariate name.
        b: String,
    },
}

impl std::fmt::Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Term::Power { name, exponent: 1 } => write!(f, "{name}"),
            Term::Power { name, exponent } => write!(f, "{name}^{exponent}"),
            Term::Interaction { a, b } => write!(f, "{a}*{b}"),
        }
    }
}

impl std::str::FromStr for Term {
    type Err = Error;

    /// Parses `name`, `name^k`, or `name*other`.
    fn from_str(s: &str) -> Result<Term> {
        let bad = |why: &str| Error::InvalidConfig(format!("design term `{s}`: {why}"));
        let s = s.trim();
        if s.is_empty() {
            return Err(bad("empty term"));
        }
        if let Some((a, b)) = s.split_once('*') {
            let (a, b) = (a.trim(), b.trim());
            if a.is_empty() || b.is_empty() || a.contains('*') || b.contains('*') {
                return Err(bad("interactions take exactly two covariates"));
            }
            return Ok(Term::Interaction {
                a: a.to_string(),
                b: b.to_string(),
            });
        }
        if let Some((name, exp)) = s.split_once('^') {
            let name = name.trim();
            let exponent: u32 = exp
                .trim()
                .parse()
                .map_err(|_| bad("exponent must be a positive integer"))?;
            if name.is_empty() || exponent == 0 {
                return Err(bad("power terms need a name and an exponent of at least 1"));
            }
            return Ok(Term::Power {
                name: name.to_string(),
                exponent,
            });
        }
        Ok(Term::Power {
            name: s.to_string(),
            exponent: 1,
        })
    }
}

/// The covariate design of the proxy regression (without the intercept,
/// which is always included).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Design columns in order.
    pub terms: Vec<Term>,
}

impl DesignSpec {
    /// A design from already-built terms.
    pub fn new(terms: Vec<Term>) -> Self {
        DesignSpec { terms }
    }

    /// The intercept-only design.
    pub fn empty() -> Self {
        DesignSpec { terms: Vec::new() }
    }

    /// Parses a list of term strings such as `["age", "age^2", "age*educ"]`.
    pub fn parse<S: AsRef<str>>(terms: &[S]) -> Result<Self> {
        Ok(DesignSpec {
            terms: terms
                .iter()
                .map(|t| t.as_ref().parse())
                .collect::<Result<Vec<Term>>>()?,
        })
    }

    /// Resolves every term against the dataset's covariate names, returning
    /// per-term column indices.
    fn resolve(&self, names: &[String]) -> Result<Vec<(usize, Option<usize>, u32)>> {
        let find = |name: &str| -> Result<usize> {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        self.terms
            .iter()
            .map(|t| match t {
                Term::Power { name, exponent } => Ok((find(name)?, None, *exponent)),
                Term::Interaction { a, b } => Ok((find(a)?, Some(find(b)?), 1)),
            })
            .collect()
    }
}

/// Evaluates the design columns for one covariate vector.
fn design_row(resolved: &[(usize, Option<usize>, u32)], x: &[f64], out: &mut [f64]) {
    for (col, &(i, j, exp)) in out.iter_mut().zip(resolved) {
        *col = match j {
            Some(j) => x[i] * x[j],
            None => x[i].powi(exp as i32),
        };
    }
}

/// A fitted weighted least squares proxy for the outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyModel {
    /// The design the coefficients refer to.
    pub design: DesignSpec,
    /// Intercept.
    pub intercept: f64,
    /// One coefficient per design term.
    pub coefficients: Vec<f64>,
    /// Weighted R² on the fit subsample.
    pub r_squared: f64,
    /// Number of selected rows the fit used.
    pub n_fit: usize,
}

impl ProxyModel {
    /// Linear predictions for every row of `ds`, selected or not.
    pub fn predict(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let resolved = self.design.resolve(ds.covariate_names())?;
        let mut cols = vec![0.0; resolved.len()];
        Ok(ds
            .observations()
            .iter()
            .map(|o| {
                design_row(&resolved, &o.x, &mut cols);
                self.intercept
                    + cols
                        .iter()
                        .zip(&self.coefficients)
                        .map(|(c, b)| c * b)
                        .sum::<f64>()
            })
            .collect())
    }
}

/// Weighted least squares of the outcome on the design over selected rows.
///
/// The fit sample is the selected subsample (outcomes are unobserved
/// elsewhere); predictions are defined for every row. The normal equations
/// are solved by a Cholesky factorization after a scale-invariant rank check
/// on the Gram matrix, so exactly collinear designs are rejected even when
/// rounding would let the factorization squeak through.
pub fn fit_proxy(ds: &Dataset, design: &DesignSpec) -> Result<ProxyModel> {
    use nalgebra::{Cholesky, DMatrix, DVector};

    let resolved = design.resolve(ds.covariate_names())?;
    let p = resolved.len() + 1;
    let selected: Vec<_> = ds.observations().iter().filter(|o| o.s == 1).collect();
    if selected.is_empty() {
        return Err(Error::NoSelectedObservations);
    }

    let mut xtwx = DMatrix::zeros(p, p);
    let mut xtwy = DVector::zeros(p);
    let mut row = vec![0.0; p];
    for o in &selected {
        row[0] = 1.0;
        design_row(&resolved, &o.x, &mut row[1..]);
        let y = o.y.expect("selected rows carry outcomes");
        for i in 0..p {
            for j in 0..p {
                xtwx[(i, j)] += o.w * row[i] * row[j];
            }
            xtwy[i] += o.w * row[i] * y;
        }
    }

    // Rank check on the correlation-scaled Gram matrix: D^{-1/2}·X'WX·D^{-1/2}
    // has unit diagonal, so a tiny eigenvalue means collinearity rather than
    // mismatched column scales (age vs. age², say).
    let diag: Vec<f64> = (0..p).map(|i| xtwx[(i, i)]).collect();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::RankDeficientDesign);
    }
    let scaled = DMatrix::from_fn(p, p, |i, j| xtwx[(i, j)] / (diag[i] * diag[j]).sqrt());
    let min_eig = scaled
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig <= 1e-10 {
        return Err(Error::RankDeficientDesign);
    }

    let beta = Cholesky::new(xtwx)
        .ok_or(Error::RankDeficientDesign)?
        .solve(&xtwy);

    // Weighted R² over the fit subsample.
    let w_total: f64 = selected.iter().map(|o| o.w).sum();
    let y_bar: f64 = selected
        .iter()
        .map(|o| o.w * o.y.expect("selected rows carry outcomes"))
        .sum::<f64>()
        / w_total;
    let (mut ssr, mut sst) = (0.0, 0.0);
    for o in &selected {
        row[0] = 1.0;
        design_row(&resolved, &o.x, &mut row[1..]);
        let fitted: f64 = row.iter().zip(beta.iter()).map(|(c, b)| c * b).sum();
        let y = o.y.expect("selected rows carry outcomes");
        ssr += o.w * (y - fitted) * (y - fitted);
        sst += o.w * (y - y_bar) * (y - y_bar);
    }
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };

    Ok(ProxyModel {
        design: design.clone(),
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        r_squared,
        n_fit: selected.len(),
    })
}

/// A partition of the dataset into proxy-quantile groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAssignment {
    /// Group label in 1..=k for every row, in dataset order.
    pub labels: Vec<usize>,
    /// The k−1 weighted quantile cut points.
    pub cuts: Vec<f64>,
    /// Number of groups.
    pub k: usize,
}

impl GroupAssignment {
    /// The single-group assignment: every row in group 1. Running the
    /// pipeline through it is identical to running it ungrouped.
    pub fn single(n: usize) -> Self {
        GroupAssignment {
            labels: vec![1; n],
            cuts: Vec::new(),
            k: 1,
        }
    }

    /// An assignment from explicit labels (each at least 1); the number of
    /// groups is the largest label.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if labels.iter().any(|&g| g == 0) {
            return Err(Error::InvalidConfig(
                "group labels are 1-based; found 0".to_string(),
            ));
        }
        let k = *labels.iter().max().expect("nonempty labels");
        Ok(GroupAssignment {
            labels,
            cuts: Vec::new(),
            k,
        })
    }

    /// Row indices of group `g`.
    pub fn group_indices(&self, g: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == g)
            .collect()
    }

    /// Weighted share of the dataset carried by group `g`.
    pub fn group_mass(&self, ds: &Dataset, g: usize) -> f64 {
        let total = ds.total_weight();
        self.group_indices(g)
            .iter()
            .map(|&i| ds.observations()[i].w)
            .sum::<f64>()
            / total
    }
}

/// Splits the dataset into `k` weighted-quantile groups of the proxy
/// prediction.
///
/// Cut j is the weighted quantile of the predictions at j/k; a prediction
/// exactly on a cut goes to the lower group, so groups are only
/// approximately equal-mass when predictions carry ties.
pub fn assign_groups(ds: &Dataset, proxy: &ProxyModel, k: usize) -> Result<GroupAssignment> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "quantile grouping needs k of at least 2, got {k}; use GroupAssignment::single for one group"
        )));
    }
    let preds = proxy.predict(ds)?;
    let mut sorted = preds.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    if sorted.len() < k {
        return Err(Error::DegeneratePredictions {
            distinct: sorted.len(),
            k,
        });
    }
    let weights: Vec<f64> = ds.observations().iter().map(|o| o.w).collect();
    let sample = WeightedSample::new(preds.clone(), weights)?;
    let cuts: Vec<f64> = (1..k)
        .map(|j| sample.quantile(j as f64 / k as f64))
        .collect::<Result<Vec<f64>>>()?;
    let labels = preds
        .iter()
        .map(|&p| 1 + cuts.iter().filter(|&&c| p > c).count())
        .collect();
    Ok(GroupAssignment { labels, cuts, k })
}

/// What one covariate group produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupResult {
    /// Group label.
    pub group: usize,
    /// Weighted share of the dataset.
    pub mass: f64,
    /// The group's bounds and inference, or the error that stopped it.
    pub result: std::result::Result<GroupOutcome, Error>,
}

/// A successful per-group pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupOutcome {
    /// The group's bounds.
    pub bounds: TypeBounds,
    /// The group's inference output.
    pub inference: AteInference,
}

/// Runs the full pipeline (proportions → bounds → inference) independently
/// in every group.
///
/// A failing group — empty cells, negative shares, inapplicable regimes —
/// is reported in its [`GroupResult`] without stopping the others. Groups
/// run in parallel; results are ordered by group label, and each group's
/// stochastic steps get an independent seed derived from the config seed,
/// so the output does not depend on scheduling.
pub fn grouped_bounds(
    ds: &Dataset,
    assignment: &GroupAssignment,
    stratum: StratumId,
    regime: Regime,
    cfg: &InferenceConfig,
) -> Result<Vec<GroupResult>> {
    if assignment.labels.len() != ds.len() {
        return Err(Error::InvalidConfig(format!(
            "assignment covers {} rows but the dataset has {}",
            assignment.labels.len(),
            ds.len()
        )));
    }
    Ok((1..=assignment.k)
        .into_par_iter()
        .map(|g| {
            let run = || -> Result<GroupOutcome> {
                let sub = ds.subset(&assignment.group_indices(g))?;
                let props = stratum_proportions(&sub)?;
                let bounds = bounds_for_regime(&sub, stratum, regime, &props)?;
                let group_cfg = InferenceConfig {
                    seed: crate::inference::derive_seed(cfg.seed, g as u64),
                    ..*cfg
                };
                let inference = ate_inference(&sub, &bounds, &props, &group_cfg)?;
                Ok(GroupOutcome { bounds, inference })
            };
            GroupResult {
                group: g,
                mass: assignment.group_mass(ds, g),
                result: run(),
            }
        })
        .collect())
}

/// A mass-weighted average of per-group intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregatedBounds {
    /// The averaged interval.
    pub interval: Interval,
    /// Groups that entered the average.
    pub included: Vec<usize>,
    /// Groups excluded for crossed bounds (or, from
    /// [`aggregate_group_results`], per-group failures).
    pub excluded: Vec<usize>,
}

/// Mass-weighted average of group bounds: the aggregate lower bound is the
/// weighted mean of the group lower bounds, and likewise above.
///
/// Groups whose bounds are crossed are excluded (and reported); masses are
/// renormalized over the included groups.
pub fn aggregate_bounds(groups: &[TypeBounds], masses: &[f64]) -> Result<AggregatedBounds> {
    if groups.len() != masses.len() {
        return Err(Error::InvalidConfig(format!(
            "{} groups but {} masses",
            groups.len(),
            masses.len()
        )));
    }
    let pairs: Vec<(usize, &Interval, f64)> = groups
        .iter()
        .enumerate()
        .map(|(i, tb)| (i, &tb.ate, masses[i]))
        .collect();
    average_intervals(&pairs)
}

/// [`aggregate_bounds`] over the successful, uncrossed entries of a
/// [`grouped_bounds`] run, keyed by group label.
pub fn aggregate_group_results(results: &[GroupResult]) -> Result<AggregatedBounds> {
    let pairs: Vec<(usize, &Interval, f64)> = results
        .iter()
        .filter_map(|r| {
            r.result
                .as_ref()
                .ok()
                .map(|o| (r.group, &o.bounds.ate, r.mass))
        })
        .collect();
    let mut agg = average_intervals(&pairs)?;
    agg.excluded = results
        .iter()
        .map(|r| r.group)
        .filter(|g| !agg.included.contains(g))
        .collect();
    Ok(agg)
}

fn average_intervals(pairs: &[(usize, &Interval, f64)]) -> Result<AggregatedBounds> {
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    let (mut lb, mut ub, mut mass) = (0.0, 0.0, 0.0);
    for &(key, iv, m) in pairs {
        if iv.crossed {
            excluded.push(key);
            continue;
        }
        included.push(key);
        lb += m * iv.lb;
        ub += m * iv.ub;
        mass += m;
    }
    if included.is_empty() || mass <= 0.0 {
        return Err(Error::NoValidGroups);
    }
    Ok(AggregatedBounds {
        interval: Interval::new(lb / mass, ub / mass),
        included,
        excluded,
    })
}
