//! Tightened bounds under mean-dominance assumptions across strata.
//!
//! Two one-sided orderings of stratum means can be defended in applications
//! where selection is positively related to the outcome:
//!
//! * untreated dominance (`md0`): the untreated means of the strata that are
//!   ever selected untreated (T1, T2) weakly dominate those of the strata
//!   that never are (T4, T12);
//! * treated dominance (`md1`): the treated means are ordered
//!   T1 ≥ T2 ≥ T4 ≥ T12.
//!
//! `md1` alone tightens T1 and T2 (whose untreated means are point
//! identified); the tightest T4/T12 bounds use both assumptions, and T4/T12
//! also admit a variant under `md0` alone. The direction of dominance is an
//! assumption, not a testable fact, but the point identified untreated means
//! of T1 and T2 give it a partial check, reported by
//! [`mean_dominance_check`].

use serde::{Deserialize, Serialize};

use crate::bounds::{
    cell_outcomes, support_bounds, treated_bounds, treated_z_values, y0_type1, y0_type2, Interval,
    Regime, TypeBounds, Y0,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::{var_y0_t1, var_y0_t2};
use crate::strata::{cell_share, ProportionSet, StratumId};

/// Which dominance assumptions to impose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominanceRegime {
    /// Untreated means of T1/T2 dominate those of T4/T12.
    pub md0: bool,
    /// Treated means are ordered T1 ≥ T2 ≥ T4 ≥ T12.
    pub md1: bool,
}

impl DominanceRegime {
    /// The regime label for the flag combination.
    pub fn regime(&self) -> Regime {
        match (self.md0, self.md1) {
            (false, false) => Regime::Basic,
            (true, false) => Regime::Md0,
            (false, true) => Regime::Md1,
            (true, true) => Regime::Md0Md1,
        }
    }
}

impl From<Regime> for DominanceRegime {
    fn from(regime: Regime) -> Self {
        match regime {
            Regime::Basic => DominanceRegime {
                md0: false,
                md1: false,
            },
            Regime::Md0 => DominanceRegime {
                md0: true,
                md1: false,
            },
            Regime::Md1 => DominanceRegime {
                md0: false,
                md1: true,
            },
            Regime::Md0Md1 => DominanceRegime {
                md0: true,
                md1: true,
            },
        }
    }
}

/// Bounds for `stratum` under any regime: the basic trimming bounds, or the
/// dominance-tightened bounds when at least one dominance flag is on.
pub fn bounds_for_regime(
    ds: &Dataset,
    stratum: StratumId,
    regime: Regime,
    props: &ProportionSet,
) -> Result<TypeBounds> {
    match regime {
        Regime::Basic => crate::bounds::ate_bounds_basic(ds, stratum, props),
        _ => ate_bounds_md(ds, stratum, props, DominanceRegime::from(regime)),
    }
}

/// Bounds on E(Y(1) − Y(0) | stratum) under dominance assumptions.
///
/// Regime applicability:
///
/// * T1, T2: require `md1` (`md0` never binds for them);
/// * T4, T12: tightest bounds require both flags; `md0` alone tightens only
///   the untreated side;
/// * any other combination returns [`Error::RegimeNotApplicable`].
///
/// The tightened pieces are:
///
/// * T1 upper-side trimming is unchanged, but its treated mean now dominates
///   the whole treated cell, so the cell mean becomes a lower bound;
/// * T2's treated mean is dominated by T1's, so the upper trim can use T1's
///   (larger) cell share;
/// * T4's treated mean is dominated by both T1's and T2's: the z=0 treated
///   cell mean and the T1-share upper trims all become upper bounds;
/// * T12's treated mean is dominated by every other selected stratum, so
///   both treated cell means become upper bounds;
/// * under `md0` the unidentified untreated means of T4/T12 are bounded
///   above by min(y0_T1, y0_T2) instead of the support maximum.
pub fn ate_bounds_md(
    ds: &Dataset,
    stratum: StratumId,
    props: &ProportionSet,
    regime: DominanceRegime,
) -> Result<TypeBounds> {
    if stratum == StratumId::T16 {
        return Err(Error::UnsupportedStratum(stratum));
    }
    if !regime.md0 && !regime.md1 {
        return Err(Error::InvalidConfig(
            "dominance regime requires at least one of md0, md1".to_string(),
        ));
    }
    let not_applicable = || Error::RegimeNotApplicable {
        stratum,
        regime: regime.regime().to_string(),
    };

    // Mean of the treated selected cell at z.
    let cell_mean = |z: u8| -> Result<f64> { Ok(cell_outcomes(ds, 1, z)?.mean()) };
    // Upper trimmed mean of the treated cell at z using T1's share there.
    let upper_trim_at_t1_share = |z: u8| -> Result<f64> {
        let q1 = cell_share(props, StratumId::T1, 1, z)?;
        if !(q1 > 0.0 && q1 <= 1.0) {
            return Err(Error::InvalidShare(q1));
        }
        cell_outcomes(ds, 1, z)?.trimmed_mean_upper(q1)
    };

    match stratum {
        StratumId::T1 => {
            if !regime.md1 {
                return Err(not_applicable());
            }
            let y0 = y0_type1(ds)?;
            let mut treated_by_z = Vec::new();
            for z in treated_z_values(stratum) {
                let basic = treated_bounds(ds, stratum, z, props)?;
                treated_by_z.push((z, Interval::new(cell_mean(z)?, basic.ub)));
            }
            let treated = Interval::intersect(treated_by_z.iter().map(|(_, i)| i));
            Ok(TypeBounds {
                stratum,
                regime: regime.regime(),
                treated_by_z,
                treated,
                y0: Y0::Point(y0),
                ate: Interval::new(treated.lb - y0, treated.ub - y0),
            })
        }
        StratumId::T2 => {
            if !regime.md1 {
                return Err(not_applicable());
            }
            let y0 = y0_type2(ds, props)?;
            let mut treated_by_z = Vec::new();
            for z in treated_z_values(stratum) {
                let basic = treated_bounds(ds, stratum, z, props)?;
                treated_by_z.push((z, Interval::new(basic.lb, upper_trim_at_t1_share(z)?)));
            }
            let treated = Interval::intersect(treated_by_z.iter().map(|(_, i)| i));
            Ok(TypeBounds {
                stratum,
                regime: regime.regime(),
                treated_by_z,
                treated,
                y0: Y0::Point(y0),
                ate: Interval::new(treated.lb - y0, treated.ub - y0),
            })
        }
        StratumId::T4 | StratumId::T12 => {
            if !regime.md0 {
                return Err(not_applicable());
            }
            let support = support_bounds(ds)?;
            let y0_cap = y0_type1(ds)?.min(y0_type2(ds, props)?);
            let mut treated_by_z = Vec::new();
            for z in treated_z_values(stratum) {
                let basic = treated_bounds(ds, stratum, z, props)?;
                let ub = if !regime.md1 {
                    basic.ub
                } else if stratum == StratumId::T4 {
                    // At z=0, T4 is the lowest stratum in the treated cell,
                    // so the cell mean caps it; at either z the T1-share
                    // upper trim does.
                    let trim = upper_trim_at_t1_share(z)?;
                    if z == 0 {
                        trim.min(cell_mean(0)?)
                    } else {
                        trim
                    }
                } else {
                    // T12 is the lowest stratum in its only treated cell.
                    cell_mean(z)?
                };
                treated_by_z.push((z, Interval::new(basic.lb, ub)));
            }
            let mut treated = Interval::intersect(treated_by_z.iter().map(|(_, i)| i));
            if stratum == StratumId::T12 && regime.md1 {
                // Dominance chains through T4 make the z=0 treated cell mean
                // an upper bound as well, although T12 is never observed
                // there.
                treated = Interval::new(treated.lb, treated.ub.min(cell_mean(0)?));
            }
            Ok(TypeBounds {
                stratum,
                regime: regime.regime(),
                treated_by_z,
                treated,
                y0: Y0::Range {
                    lb: support.y_lb,
                    ub: y0_cap,
                },
                ate: Interval::new(treated.lb - y0_cap, treated.ub - support.y_lb),
            })
        }
        StratumId::T16 => unreachable!("rejected above"),
    }
}

/// The point identified untreated means of T1 and T2 with their sampling
/// uncertainty: a partial, one-directional check of the dominance direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanDominanceCheck {
    /// Untreated mean of the always-selected stratum.
    pub y0_t1: f64,
    /// Untreated mean of stratum T2.
    pub y0_t2: f64,
    /// Standard error of `y0_t1`.
    pub se_t1: f64,
    /// Standard error of `y0_t2`.
    pub se_t2: f64,
    /// Asymptotic covariance of the two estimators (already divided by n).
    pub cov: f64,
    /// y0_t1 − y0_t2.
    pub diff: f64,
    /// Delta-method standard error of the difference.
    pub se_diff: f64,
    /// Whether y0_t1 ≥ y0_t2.
    pub t1_larger: bool,
}

/// Compares the identified untreated means of T1 and T2.
pub fn mean_dominance_check(ds: &Dataset, props: &ProportionSet) -> Result<MeanDominanceCheck> {
    let y0_t1 = y0_type1(ds)?;
    let y0_t2 = y0_type2(ds, props)?;
    let n = ds.len() as f64;
    let v1 = var_y0_t1(ds)?;
    let (v2, _) = var_y0_t2(ds, props)?;
    let cov_v = cov_y0_t1_t2(ds, props)?;
    let var_diff = (v1 + v2 - 2.0 * cov_v) / n;
    Ok(MeanDominanceCheck {
        y0_t1,
        y0_t2,
        se_t1: (v1 / n).sqrt(),
        se_t2: (v2 / n).sqrt(),
        cov: cov_v / n,
        diff: y0_t1 - y0_t2,
        se_diff: var_diff.max(0.0).sqrt(),
        t1_larger: y0_t1 >= y0_t2,
    })
}

/// Asymptotic covariance of (ŷ0_T1, ŷ0_T2).
///
/// ŷ0_T2 depends on ŷ0_T1 (= μ̂01) with loading −π1/π2, and the proportion
/// estimators are uncorrelated with μ̂01, so the covariance is
/// −(π1/π2)·Var(μ̂01). This equals minus the μ̂02–μ̂01 covariance reported by
/// [`var_y0_t2`] because μ̂02 loads on μ̂01 with the opposite sign.
fn cov_y0_t1_t2(ds: &Dataset, props: &ProportionSet) -> Result<f64> {
    if props.pi2 <= 0.0 {
        return Err(Error::ZeroPi2);
    }
    let v1 = var_y0_t1(ds)?;
    Ok(-(props.pi1 / props.pi2) * v1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::ate_bounds_basic;
    use crate::data::fixtures;
    use crate::strata::stratum_proportions;
    use approx::assert_abs_diff_eq;

    fn md(md0: bool, md1: bool) -> DominanceRegime {
        DominanceRegime { md0, md1 }
    }

    #[test]
    fn ds1_t1_under_treated_dominance() {
        let ds = fixtures::ds1();
        let props = stratum_proportions(&ds).unwrap();
        let b = ate_bounds_md(&ds, StratumId::T1, &props, md(false, true)).unwrap();
        // Cell means are 4 (z=0) and 4.5 (z=1); y0 = 1.5.
        assert_abs_diff_eq!(b.ate.lb, 3.0);
        assert_abs_diff_eq!(b.ate.ub, 3.5);
        // Both flags give the same answer: md0 never binds for T1.
        let both = ate_bounds_md(&ds, StratumId::T1, &props, md(true, true)).unwrap();
        assert_abs_diff_eq!(both.ate.lb, b.ate.lb);
        assert_abs_diff_eq!(both.ate.ub, b.ate.ub);
    }

    #[test]
    fn ds1_t2_under_treated_dominance() {
        let ds = fixtures::ds1();
        let props = stratum_proportions(&ds).unwrap();
        let b = ate_bounds_md(&ds, StratumId::T2, &props, md(false, true)).unwrap();
        // Upper trims at T1's shares are 5 (z=0) and 6 (z=1); y0 = 3.
        assert_abs_diff_eq!(b.ate.lb, -1.5);
        assert_abs_diff_eq!(b.ate.ub, 2.0);
    }

    #[test]
    fn ds1_t4_under_both_dominance_assumptions() {
        let ds = fixtures::ds1();
        let props = stratum_proportions(&ds).unwrap();
        let b = ate_bounds_md(&ds, StratumId::T4, &props, md(true, true)).unwrap();
        // Upper: min{cell mean at z=0 (= 4), T1-share upper trims (5, 6)}
        // minus the support minimum 1. Lower: basic treated lower bound 1
        // minus min(y0_T1, y0_T2) = 1.5.
        assert_abs_diff_eq!(b.ate.lb, -0.5);
        assert_abs_diff_eq!(b.ate.ub, 3.0);
    }

    #[test]
    fn ds1_t4_under_untreated_dominance_only() {
        let ds = fixtures::ds1();
        let props = stratum_proportions(&ds).unwrap();
        let b = ate_bounds_md(&ds, StratumId::T4, &props, md(true, false)).unwrap();
        // Treated side unchanged from basic; only the untreated cap moves.
        assert_abs_diff_eq!(b.ate.lb, -0.5);
        assert_abs_diff_eq!(b.ate.ub, 5.5);
    }

    #[test]
    fn ds1_t12_under_dominance() {
        let ds = fixtures::ds1();
        let props = stratum_proportions(&ds).unwrap();
        let both = ate_bounds_md(&ds, StratumId::T12, &props, md(true, true)).unwrap();
        // Upper: min of the treated cell means (4, 4.5) minus support min 1.
        assert_abs_diff_eq!(both.ate.lb, -0.5);
        assert_abs_diff_eq!(both.ate.ub, 3.0);

        let md0_only = ate_bounds_md(&ds, StratumId::T12, &props, md(true, false)).unwrap();
        assert_abs_diff_eq!(md0_only.ate.lb, -0.5);
        assert_abs_diff_eq!(md0_only.ate.ub, 6.5);
    }

    #[test]
    fn dominance_never_widens_the_basic_bounds() {
        let ds = fixtures::ds1();
        let props = stratum_proportions(&ds).unwrap();
        let cases = [
            (StratumId::T1, md(false, true)),
            (StratumId::T2, md(false, true)),
            (StratumId::T4, md(true, false)),
            (StratumId::T4, md(true, true)),
            (StratumId::T12, md(true, false)),
            (StratumId::T12, md(true, true)),
        ];
        for (stratum, regime) in cases {
            let basic = ate_bounds_basic(&ds, stratum, &props).unwrap();
            let tightened = ate_bounds_md(&ds, stratum, &props, regime).unwrap();
            assert!(
                tightened.ate.lb >= basic.ate.lb - 1e-12,
                "{stratum} lower bound loosened"
            );
            assert!(
                tightened.ate.ub <= basic.ate.ub + 1e-12,
                "{stratum} upper bound loosened"
            );
        }
    }

    #[test]
    fn inapplicable_regimes_are_rejected() {
        let ds = fixtures::ds1();
        let props = stratum_proportions(&ds).unwrap();
        for (stratum, regime) in [
            (StratumId::T1, md(true, false)),
            (StratumId::T2, md(true, false)),
            (StratumId::T4, md(false, true)),
            (StratumId::T12, md(false, true)),
        ] {
            assert!(matches!(
                ate_bounds_md(&ds, stratum, &props, regime),
                Err(Error::RegimeNotApplicable { .. })
            ));
        }
        assert!(matches!(
            ate_bounds_md(&ds, StratumId::T16, &props, md(true, true)),
            Err(Error::UnsupportedStratum(StratumId::T16))
        ));
        assert!(matches!(
            ate_bounds_md(&ds, StratumId::T1, &props, md(false, false)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn ds1_mean_dominance_check() {
        let ds = fixtures::ds1();
        let props = stratum_proportions(&ds).unwrap();
        let check = mean_dominance_check(&ds, &props).unwrap();
        assert_abs_diff_eq!(check.diff, -1.5);
        assert!(!check.t1_larger);
        // V1 = 3, V2 = 132, Cov = −6 (note the sign: ŷ0_T2 loads negatively on μ̂01),
        // so Var(diff) = (3 + 132 + 12)/24.
        assert_abs_diff_eq!(check.se_t1, (3.0f64 / 24.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(check.se_t2, (132.0f64 / 24.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(check.se_diff, (147.0f64 / 24.0).sqrt(), epsilon = 1e-12);
    }
}
