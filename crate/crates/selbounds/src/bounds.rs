//! Treatment-effect bounds under the basic identification assumptions.
//!
//! The treated arm of each stratum is only set identified: an observed
//! selected cell is a mixture of strata, and a trimming argument in the
//! spirit of Lee (2009) brackets each component's mean between the trimmed
//! means of the cell at the stratum's mixing share. The untreated arm is
//! point identified for the two strata that are ever selected without
//! treatment (T1 directly, T2 by inverting a two-component mixture), and is
//! bracketed by the observed outcome support for the rest. Where a stratum
//! is observed at both instrument values, the per-z intervals are
//! intersected; crossed intersections are preserved and flagged, never
//! collapsed.
//!
//! # References
//!
//! Lee, D. S. (2009). Training, wages, and sample selection: estimating
//! sharp bounds on treatment effects. Review of Economic Studies 76(3).

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::strata::{cell_share, ProportionSet, StratumId};
use crate::trimming::WeightedSample;

/// A closed interval, possibly crossed (lb > ub).
///
/// Crossed intervals arise when per-z bounds are intersected in finite
/// samples; they are reported as-is with the flag set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    /// Lower endpoint.
    pub lb: f64,
    /// Upper endpoint.
    pub ub: f64,
    /// Whether lb > ub.
    pub crossed: bool,
}

impl Interval {
    /// Builds an interval, setting the crossed flag from the endpoints.
    pub fn new(lb: f64, ub: f64) -> Self {
        Interval {
            lb,
            ub,
            crossed: lb > ub,
        }
    }

    /// Width (negative when crossed).
    pub fn width(&self) -> f64 {
        self.ub - self.lb
    }

    /// Whether `x` lies inside (false for any x when crossed).
    pub fn contains(&self, x: f64) -> bool {
        self.lb <= x && x <= self.ub
    }

    /// Intersection of intervals: max of lower ends, min of upper ends.
    pub fn intersect<'a, I: IntoIterator<Item = &'a Interval>>(intervals: I) -> Interval {
        let mut lb = f64::NEG_INFINITY;
        let mut ub = f64::INFINITY;
        for i in intervals {
            lb = lb.max(i.lb);
            ub = ub.min(i.ub);
        }
        Interval::new(lb, ub)
    }
}

/// Observed outcome support: the smallest and largest selected outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportBounds {
    /// Minimum observed outcome.
    pub y_lb: f64,
    /// Maximum observed outcome.
    pub y_ub: f64,
}

/// The untreated-arm term of a stratum's effect bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Y0 {
    /// Point identified untreated mean (strata T1 and T2).
    Point(f64),
    /// Interval for the untreated mean (strata never selected untreated).
    Range {
        /// Lower endpoint of the untreated-mean interval.
        lb: f64,
        /// Upper endpoint of the untreated-mean interval.
        ub: f64,
    },
}

/// Identification regime for a set of bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Mixture trimming only.
    Basic,
    /// Adds untreated-mean dominance across strata.
    Md0,
    /// Adds treated-mean dominance across strata.
    Md1,
    /// Both dominance assumptions.
    Md0Md1,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let label = match self {
            Regime::Basic => "basic",
            Regime::Md0 => "md0",
            Regime::Md1 => "md1",
            Regime::Md0Md1 => "md0md1",
        };
        f.write_str(label)
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "basic" => Ok(Regime::Basic),
            "md0" => Ok(Regime::Md0),
            "md1" => Ok(Regime::Md1),
            "md0md1" | "md0+md1" => Ok(Regime::Md0Md1),
            other => Err(Error::InvalidConfig(format!("unknown regime `{other}`"))),
        }
    }
}

/// Complete bound set for one stratum under one regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeBounds {
    /// The stratum.
    pub stratum: StratumId,
    /// The assumption regime the bounds were computed under.
    pub regime: Regime,
    /// Treated-mean interval per instrument value where the stratum is
    /// observed treated (ascending z).
    pub treated_by_z: Vec<(u8, Interval)>,
    /// Intersection of the per-z treated intervals.
    pub treated: Interval,
    /// The untreated-arm term.
    pub y0: Y0,
    /// Bounds on E(Y(1) − Y(0) | stratum).
    pub ate: Interval,
}

/// The selected outcomes of cell (D = d, Z = z) as a weighted sample.
pub(crate) fn cell_outcomes(ds: &Dataset, d: u8, z: u8) -> Result<WeightedSample> {
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for o in ds.cell_rows(d, z) {
        if o.s == 1 {
            values.push(o.y.expect("selected rows carry an outcome"));
            weights.push(o.w);
        }
    }
    if values.is_empty() {
        return Err(Error::NoSelectedInCell { d, z });
    }
    WeightedSample::new(values, weights)
}

/// The instrument values at which `stratum` is observed in the treated
/// selected cell, ascending.
pub fn treated_z_values(stratum: StratumId) -> Vec<u8> {
    [0u8, 1u8]
        .into_iter()
        .filter(|&z| stratum.observed_in(1, 1, z))
        .collect()
}

/// The point identified untreated mean of the always-selected stratum:
/// the mean outcome of cell (S=1, D=0, Z=1), whose only member is T1.
pub fn y0_type1(ds: &Dataset) -> Result<f64> {
    Ok(cell_outcomes(ds, 0, 1)?.mean())
}

/// The untreated mean of stratum T2, by mixture inversion:
/// [m00·(π1+π2) − m01·π1] / π2, with m00, m01 the selected mean outcomes
/// at (D=0, Z=0) and (D=0, Z=1).
pub fn y0_type2(ds: &Dataset, props: &ProportionSet) -> Result<f64> {
    if props.pi2 <= 0.0 {
        return Err(Error::ZeroPi2);
    }
    let m00 = cell_outcomes(ds, 0, 0)?.mean();
    let m01 = cell_outcomes(ds, 0, 1)?.mean();
    Ok((m00 * (props.pi1 + props.pi2) - m01 * props.pi1) / props.pi2)
}

/// Minimum and maximum observed outcome over all selected rows.
pub fn support_bounds(ds: &Dataset) -> Result<SupportBounds> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut seen = false;
    for o in ds.observations() {
        if let Some(y) = o.y {
            lo = lo.min(y);
            hi = hi.max(y);
            seen = true;
        }
    }
    if !seen {
        return Err(Error::NoSelectedObservations);
    }
    Ok(SupportBounds { y_lb: lo, y_ub: hi })
}

/// Trimming bounds on E(Y(1) | stratum) from the treated selected cell at
/// instrument value `z`.
///
/// The stratum's mixing share q in cell (S=1, D=1, Z=z) determines the trim:
/// the lower bound is the mean of the lowest q-share of the cell outcomes,
/// the upper bound the mean of the highest q-share.
pub fn treated_bounds(
    ds: &Dataset,
    stratum: StratumId,
    z: u8,
    props: &ProportionSet,
) -> Result<Interval> {
    let q = cell_share(props, stratum, 1, z)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidShare(q));
    }
    let cell = cell_outcomes(ds, 1, z)?;
    Ok(Interval::new(
        cell.trimmed_mean_lower(q)?,
        cell.trimmed_mean_upper(q)?,
    ))
}

/// Bounds on E(Y(1) − Y(0) | stratum) under the basic assumptions.
///
/// Intersects the per-z treated intervals over the instrument values where
/// the stratum is observed treated, then subtracts the untreated term: the
/// identified point for T1/T2, the observed support interval for T4/T12
/// (subtracted end-for-end). No estimator exists for the never-selected
/// stratum.
pub fn ate_bounds_basic(
    ds: &Dataset,
    stratum: StratumId,
    props: &ProportionSet,
) -> Result<TypeBounds> {
    if stratum == StratumId::T16 {
        return Err(Error::UnsupportedStratum(stratum));
    }
    let mut treated_by_z = Vec::new();
    for z in treated_z_values(stratum) {
        treated_by_z.push((z, treated_bounds(ds, stratum, z, props)?));
    }
    let treated = Interval::intersect(treated_by_z.iter().map(|(_, i)| i));
    let (y0, ate) = match stratum {
        StratumId::T1 => {
            let y0 = y0_type1(ds)?;
            (Y0::Point(y0), Interval::new(treated.lb - y0, treated.ub - y0))
        }
        StratumId::T2 => {
            let y0 = y0_type2(ds, props)?;
            (Y0::Point(y0), Interval::new(treated.lb - y0, treated.ub - y0))
        }
        StratumId::T4 | StratumId::T12 => {
            let support = support_bounds(ds)?;
            (
                Y0::Range {
                    lb: support.y_lb,
                    ub: support.y_ub,
                },
                Interval::new(treated.lb - support.y_ub, treated.ub - support.y_lb),
            )
        }
        StratumId::T16 => unreachable!("rejected above"),
    };
    Ok(TypeBounds {
        stratum,
        regime: Regime::Basic,
        treated_by_z,
        treated,
        y0,
        ate,
    })
}
