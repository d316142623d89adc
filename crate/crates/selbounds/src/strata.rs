//! Principal strata: identification of stratum shares and cell composition.
//!
//! Under the exclusion restriction (the instrument moves selection, not the
//! outcome) and the threshold-crossing selection model, only five selection
//! response patterns can occur. Writing a stratum's pattern as the vector
//! (S(1,1), S(1,0), S(0,1), S(0,0)) of potential selection states:
//!
//! * `T1`  — (1,1,1,1), selected everywhere
//! * `T2`  — (1,1,0,1), deselected only by the instrument under no treatment
//! * `T4`  — (1,1,0,0), selected only under treatment
//! * `T12` — (1,0,0,0), selected only under treatment with the instrument
//! * `T16` — (0,0,0,0), never selected
//!
//! Their population shares are point identified from the four conditional
//! selection probabilities p(d,z) = P(S=1 | D=d, Z=z) by differencing, and
//! the shares in turn pin down the mixing proportions of every observed
//! (S=1, D, Z) cell.

use serde::{Deserialize, Serialize};

use crate::data::{cell_stats, Dataset};
use crate::error::{Error, Result};

/// Identifier of a principal stratum (selection response type).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StratumId {
    /// Always selected.
    T1,
    /// Selected unless untreated with the instrument on.
    T2,
    /// Selected only when treated.
    T4,
    /// Selected only when treated with the instrument on.
    T12,
    /// Never selected.
    T16,
}

impl StratumId {
    /// All strata, in share order.
    pub const ALL: [StratumId; 5] = [
        StratumId::T1,
        StratumId::T2,
        StratumId::T4,
        StratumId::T12,
        StratumId::T16,
    ];

    /// Potential selection states as (S(1,1), S(1,0), S(0,1), S(0,0)).
    pub fn selection_pattern(self) -> [u8; 4] {
        match self {
            StratumId::T1 => [1, 1, 1, 1],
            StratumId::T2 => [1, 1, 0, 1],
            StratumId::T4 => [1, 1, 0, 0],
            StratumId::T12 => [1, 0, 0, 0],
            StratumId::T16 => [0, 0, 0, 0],
        }
    }

    /// The stratum's potential selection state under (D = d, Z = z).
    pub fn selected_under(self, d: u8, z: u8) -> u8 {
        let p = self.selection_pattern();
        match (d, z) {
            (1, 1) => p[0],
            (1, 0) => p[1],
            (0, 1) => p[2],
            (0, 0) => p[3],
            _ => unreachable!("d and z are 0/1"),
        }
    }

    /// Whether members of this stratum appear in observed cell (S=s, D=d, Z=z).
    pub fn observed_in(self, s: u8, d: u8, z: u8) -> bool {
        self.selected_under(d, z) == s
    }

    /// Strata present in the selected cell (S=1, D=d, Z=z), in share order.
    pub fn members_of_selected_cell(d: u8, z: u8) -> Vec<StratumId> {
        StratumId::ALL
            .iter()
            .copied()
            .filter(|t| t.observed_in(1, d, z))
            .collect()
    }
}

impl std::fmt::Display for StratumId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let label = match self {
            StratumId::T1 => "T1",
            StratumId::T2 => "T2",
            StratumId::T4 => "T4",
            StratumId::T12 => "T12",
            StratumId::T16 => "T16",
        };
        f.write_str(label)
    }
}

impl std::str::FromStr for StratumId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T1" => Ok(StratumId::T1),
            "T2" => Ok(StratumId::T2),
            "T4" => Ok(StratumId::T4),
            "T12" => Ok(StratumId::T12),
            "T16" => Ok(StratumId::T16),
            other => Err(Error::InvalidConfig(format!("unknown stratum `{other}`"))),
        }
    }
}

/// Point-identified population shares of the five strata.
///
/// Shares sum to one by construction (the defining differences telescope).
/// A share can come out negative when the monotonicity conditions fail in
/// sample; negative shares are reported as-is and flagged, never clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProportionSet {
    /// Share of the always-selected stratum.
    pub pi1: f64,
    /// Share of stratum T2.
    pub pi2: f64,
    /// Share of stratum T4.
    pub pi4: f64,
    /// Share of stratum T12.
    pub pi12: f64,
    /// Share of the never-selected stratum.
    pub pi16: f64,
}

impl ProportionSet {
    /// The share of one stratum.
    pub fn share(&self, stratum: StratumId) -> f64 {
        match stratum {
            StratumId::T1 => self.pi1,
            StratumId::T2 => self.pi2,
            StratumId::T4 => self.pi4,
            StratumId::T12 => self.pi12,
            StratumId::T16 => self.pi16,
        }
    }

    /// Whether any estimated share is negative (monotonicity failure).
    pub fn any_negative(&self) -> bool {
        !self.negative_strata().is_empty()
    }

    /// The strata with negative estimated shares.
    pub fn negative_strata(&self) -> Vec<StratumId> {
        StratumId::ALL
            .iter()
            .copied()
            .filter(|t| self.share(*t) < 0.0)
            .collect()
    }

    /// Total share of the strata present in selected cell (S=1, D=d, Z=z).
    ///
    /// Equals the plug-in selection probability p(d,z) of that cell.
    pub fn selected_cell_total(&self, d: u8, z: u8) -> f64 {
        StratumId::members_of_selected_cell(d, z)
            .iter()
            .map(|t| self.share(*t))
            .sum()
    }
}

/// Estimates the five stratum shares from the four cell selection rates.
///
/// pi1 = p(0,1); pi2 = p(0,0) − p(0,1); pi4 = p(1,0) − p(0,0);
/// pi12 = p(1,1) − p(1,0); pi16 = 1 − p(1,1), with p(d,z) the weighted
/// selection rate of cell (d,z).
pub fn stratum_proportions(ds: &Dataset) -> Result<ProportionSet> {
    let p = selection_rates(ds)?;
    Ok(ProportionSet {
        pi1: p.p01,
        pi2: p.p00 - p.p01,
        pi4: p.p10 - p.p00,
        pi12: p.p11 - p.p10,
        pi16: 1.0 - p.p11,
    })
}

/// The mixing share of `stratum` within observed cell (S=1, D=d, Z=z).
///
/// Returns q = π_stratum / Σ π over the strata present in that cell; for
/// instance the (S=1, D=1, Z=1) denominator is pi1 + pi2 + pi4 + pi12.
pub fn cell_share(props: &ProportionSet, stratum: StratumId, d: u8, z: u8) -> Result<f64> {
    if !stratum.observed_in(1, d, z) {
        return Err(Error::StratumNotInCell {
            stratum,
            s: 1,
            d,
            z,
        });
    }
    let denom = props.selected_cell_total(d, z);
    if denom <= 0.0 {
        return Err(Error::ZeroDenominator { d, z });
    }
    Ok(props.share(stratum) / denom)
}

/// The four testable selection-monotonicity margins.
///
/// All four are nonnegative in population when the threshold-crossing
/// selection model holds; these are necessary (not sufficient) conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityReport {
    /// p(1,0) − p(0,0): treatment raises selection when the instrument is off.
    pub treatment_margin_z0: f64,
    /// p(1,1) − p(0,1): treatment raises selection when the instrument is on.
    pub treatment_margin_z1: f64,
    /// p(0,0) − p(0,1): the instrument lowers selection among the untreated.
    pub instrument_margin_d0: f64,
    /// p(1,1) − p(1,0): the instrument raises selection among the treated.
    pub instrument_margin_d1: f64,
    /// Whether all four margins are nonnegative.
    pub pass: bool,
}

impl MonotonicityReport {
    /// The margins in reporting order (z=0 treat, z=1 treat, d=0, d=1).
    pub fn margins(&self) -> [f64; 4] {
        [
            self.treatment_margin_z0,
            self.treatment_margin_z1,
            self.instrument_margin_d0,
            self.instrument_margin_d1,
        ]
    }
}

/// Computes the four weighted monotonicity margins and a pass flag.
pub fn monotonicity_diagnostics(ds: &Dataset) -> Result<MonotonicityReport> {
    let p = selection_rates(ds)?;
    let report = MonotonicityReport {
        treatment_margin_z0: p.p10 - p.p00,
        treatment_margin_z1: p.p11 - p.p01,
        instrument_margin_d0: p.p00 - p.p01,
        instrument_margin_d1: p.p11 - p.p10,
        pass: false,
    };
    let pass = report.margins().iter().all(|m| *m >= 0.0);
    Ok(MonotonicityReport { pass, ..report })
}

struct SelectionRates {
    p00: f64,
    p01: f64,
    p10: f64,
    p11: f64,
}

fn selection_rates(ds: &Dataset) -> Result<SelectionRates> {
    Ok(SelectionRates {
        p00: cell_stats(ds, 0, 0)?.p_select,
        p01: cell_stats(ds, 0, 1)?.p_select,
        p10: cell_stats(ds, 1, 0)?.p_select,
        p11: cell_stats(ds, 1, 1)?.p_select,
    })
}
