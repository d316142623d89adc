//! Error type shared by every module in the crate.

use crate::strata::StratumId;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while loading data, estimating proportions,
/// computing bounds, or running inference.
///
/// Estimation routines never panic on bad input; they return one of these
/// variants so callers (in particular the per-group pipeline, which must keep
/// going when a single group fails) can record the failure and move on.
#[derive(Debug, Clone, PartialEq, serde::Serialize, thiserror::Error)]
pub enum Error {
    // ---- dataset construction and CSV loading ----
    /// A column named in the schema is missing from the CSV header.
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    /// A cell failed to parse or violated a domain restriction.
    #[error("row {row}, column `{column}`: {reason}")]
    BadValue {
        /// 1-based data row (header excluded).
        row: usize,
        /// Column name as given in the schema.
        column: String,
        /// Human-readable description of the violation.
        reason: String,
    },
    /// An outcome value is present although the row is not selected (s = 0).
    #[error("row {0}: outcome present although the row is unselected (s = 0)")]
    OutcomePresentWhenUnselected(usize),
    /// Sampling weights must be strictly positive.
    #[error("row {0}: weight must be strictly positive and finite")]
    NonpositiveWeight(usize),
    /// Datasets must contain at least one observation.
    #[error("dataset contains no observations")]
    EmptyDataset,
    /// Underlying I/O failure while reading a file.
    #[error("i/o error: {0}")]
    Io(String),

    // ---- cells and strata ----
    /// The (D = d, Z = z) cell carries no weight.
    #[error("cell (D={d}, Z={z}) contains no observations")]
    EmptyCell {
        /// Treatment arm of the cell.
        d: u8,
        /// Instrument arm of the cell.
        z: u8,
    },
    /// The (D = d, Z = z) cell has no selected members, so no outcome
    /// statistic is defined there.
    #[error("cell (D={d}, Z={z}) contains no selected observations")]
    NoSelectedInCell {
        /// Treatment arm of the cell.
        d: u8,
        /// Instrument arm of the cell.
        z: u8,
    },
    /// The stratum is not a member of the requested observed cell.
    #[error("stratum {stratum} is not observed in cell (S={s}, D={d}, Z={z})")]
    StratumNotInCell {
        /// Stratum that was requested.
        stratum: StratumId,
        /// Selection indicator of the cell.
        s: u8,
        /// Treatment arm of the cell.
        d: u8,
        /// Instrument arm of the cell.
        z: u8,
    },
    /// The selected mass in the cell used as a denominator is not positive.
    #[error("selected share in cell (D={d}, Z={z}) is not positive")]
    ZeroDenominator {
        /// Treatment arm of the cell.
        d: u8,
        /// Instrument arm of the cell.
        z: u8,
    },
    /// The estimated share of always-selected compliers (`pi2`) is not
    /// positive, so the type 2 untreated mean is not identified.
    #[error("estimated pi2 is not positive; the type 2 untreated mean is not identified")]
    ZeroPi2,
    /// No estimator is defined for this stratum (the never-selected type is
    /// theoretical only).
    #[error("no estimator is defined for stratum {0}")]
    UnsupportedStratum(StratumId),
    /// The requested assumption regime does not produce bounds for this
    /// stratum.
    #[error("regime `{regime}` does not produce bounds for stratum {stratum}")]
    RegimeNotApplicable {
        /// Stratum that was requested.
        stratum: StratumId,
        /// Name of the regime that does not apply.
        regime: String,
    },

    // ---- trimming ----
    /// A weighted sample must be nonempty.
    #[error("weighted sample is empty")]
    EmptySample,
    /// A quantile probability or trim share is outside its admissible range.
    #[error("share {0} is outside the admissible range")]
    InvalidShare(f64),
    /// Reserved: a trim set retained no weight. Unreachable under the weak
    /// inequality convention, kept so callers can match on it defensively.
    #[error("trim set retains no weight")]
    DegenerateTrim,

    // ---- inference ----
    /// Fewer than two bootstrap resamples produced a defined statistic.
    #[error("only {completed} of {attempted} bootstrap resamples produced a defined statistic")]
    DegenerateResample {
        /// Resamples on which the statistic was defined.
        completed: usize,
        /// Total resamples drawn.
        attempted: usize,
    },
    /// The covariance matrix handed to the CLR adjustment is not positive
    /// semidefinite.
    #[error("covariance matrix is not positive semidefinite: {0}")]
    NonPsdCovariance(String),

    // ---- covariate groups ----
    /// The weighted least squares design is rank deficient on the fit sample.
    #[error("proxy design matrix is rank deficient on the selected subsample")]
    RankDeficientDesign,
    /// The proxy fit requires at least one selected observation.
    #[error("no selected observations to fit the proxy model on")]
    NoSelectedObservations,
    /// Too few distinct predictions to split into the requested number of
    /// groups.
    #[error("only {distinct} distinct predicted values; cannot form {k} groups")]
    DegeneratePredictions {
        /// Number of distinct predicted values.
        distinct: usize,
        /// Number of groups requested.
        k: usize,
    },
    /// Every group was excluded (crossed bounds or per-group failure).
    #[error("no valid groups to aggregate")]
    NoValidGroups,

    // ---- simulation ----
    /// Selection thresholds must be ordered and lie in [0, 1].
    #[error("invalid selection thresholds: {0}")]
    InvalidThresholds(String),

    // ---- configuration ----
    /// A parameter violates the contract of the routine it was passed to.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
