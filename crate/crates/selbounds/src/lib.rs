//! Partial identification of treatment effects under sample selection.
//!
//! A binary treatment D and a binary selection instrument Z (excluded from
//! the outcome equation) split a population into principal strata by
//! potential selection status. Within the threshold-crossing selection
//! model, the strata proportions are point identified from the four cells'
//! selection rates, the untreated means of the always-ish-selected strata
//! are point identified, and each stratum's average treatment effect is
//! partially identified by trimming bounds in the style of Lee (2009),
//! intersected across instrument values and optionally tightened by mean
//! dominance assumptions.
//!
//! The crate provides, in pipeline order:
//!
//! * [`data`] — observations, weighted datasets, CSV ingestion;
//! * [`strata`] — stratum taxonomy, proportion estimation, monotonicity
//!   diagnostics;
//! * [`trimming`] — weighted quantiles and trimmed means/variances;
//! * [`bounds`] — per-stratum treated-outcome bounds, untreated means, and
//!   intersection ATE bounds;
//! * [`dominance`] — bounds tightened under mean dominance, and the
//!   partial check of its direction;
//! * [`inference`] — GMM asymptotic variances, the weighted bootstrap,
//!   Imbens–Manski intervals, and CLR intersection-bound adjustments;
//! * [`covariates`] — proxy regression, quantile groups, per-group
//!   pipelines, aggregation;
//! * [`simulate`] — a synthetic threshold-crossing DGP with latent truth,
//!   population oracles, and Monte Carlo coverage studies.
//!
//! # References
//!
//! Lee, D. S. (2009). Training, wages, and sample selection: estimating
//! sharp bounds on treatment effects. Review of Economic Studies 76(3).
//!
//! Imbens, G. W. and C. F. Manski (2004). Confidence intervals for
//! partially identified parameters. Econometrica 72(6).
//!
//! Chernozhukov, V., S. Lee, and A. M. Rosen (2013). Intersection bounds:
//! estimation and inference. Econometrica 81(2).

#![warn(missing_docs)]

pub mod bounds;
pub mod covariates;
pub mod data;
pub mod dominance;
pub mod error;
pub mod inference;
pub mod simulate;
pub mod strata;
pub mod trimming;

pub use bounds::{
    ate_bounds_basic, support_bounds, treated_bounds, y0_type1, y0_type2, Interval, Regime,
    SupportBounds, TypeBounds, Y0,
};
pub use covariates::{
    aggregate_bounds, aggregate_group_results, assign_groups, fit_proxy, grouped_bounds,
    AggregatedBounds, DesignSpec, GroupAssignment, GroupOutcome, GroupResult, ProxyModel, Term,
};
pub use data::{cell_stats, fixtures, load_csv, CellStats, CsvSchema, Dataset, Observation};
pub use dominance::{
    ate_bounds_md, bounds_for_regime, mean_dominance_check, DominanceRegime, MeanDominanceCheck,
};
pub use error::{Error, Result};
pub use inference::{
    ate_inference, bootstrap_cov, bootstrap_se, bootstrap_se_with, clr_adjust, cov_across_z,
    im_ci, simulated_max_quantile, var_trim_bound, var_y0_t1, var_y0_t2, AteInference,
    BootstrapMatrix, BootstrapSummary, BoundSide, CIBand, CiMethod, ClrAdjusted,
    InferenceConfig, ResampleScheme, SeSource, VarianceReport, ZVariance,
};
pub use simulate::{
    coverage_study, generate, oracle_bounds, CoverageConfig, CoverageReport, DgpConfig,
    LatentRow, LatentSample, OracleBounds, OutcomeModel,
};
pub use strata::{
    cell_share, monotonicity_diagnostics, stratum_proportions, MonotonicityReport,
    ProportionSet, StratumId,
};
pub use trimming::WeightedSample;
