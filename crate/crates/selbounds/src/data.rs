//! Observational data: rows, validation, CSV loading, and per-cell summaries.
//!
//! The unit of analysis is a row with a binary treatment `d`, a binary
//! selection instrument `z`, a selection indicator `s`, a sampling weight
//! `w`, an outcome `y` observed exactly when `s = 1`, and an optional vector
//! of covariates. Every estimator in this crate conditions on the four
//! (d, z) cells, so [`cell_stats`] is the basic summary everything else
//! builds on.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation.
///
/// Invariants (enforced by [`Dataset::new`]): `d`, `z`, `s` are 0/1, `w` is
/// strictly positive and finite, `y` is present if and only if `s = 1`, and
/// present outcomes are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Outcome, observed only for selected rows.
    pub y: Option<f64>,
    /// Treatment indicator.
    pub d: u8,
    /// Selection instrument.
    pub z: u8,
    /// Selection indicator (1 = outcome observed).
    pub s: u8,
    /// Sampling weight.
    pub w: f64,
    /// Covariate values, in the dataset's covariate order.
    pub x: Vec<f64>,
}

impl Observation {
    /// Convenience constructor for rows without covariates.
    pub fn new(y: Option<f64>, d: u8, z: u8, s: u8, w: f64) -> Self {
        Observation {
            y,
            d,
            z,
            s,
            w,
            x: Vec::new(),
        }
    }

    /// Whether the row falls in cell (D = d, Z = z).
    pub fn in_cell(&self, d: u8, z: u8) -> bool {
        self.d == d && self.z == z
    }
}

/// A validated collection of observations plus covariate names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    covariate_names: Vec<String>,
}

impl Dataset {
    /// Validates and wraps a set of observations.
    ///
    /// # Arguments
    /// * `observations` - rows in file order
    /// * `covariate_names` - names for the entries of each row's `x` vector
    pub fn new(observations: Vec<Observation>, covariate_names: Vec<String>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, obs) in observations.iter().enumerate() {
            let row = i + 1;
            for (name, v) in [("d", obs.d), ("z", obs.z), ("s", obs.s)] {
                if v > 1 {
                    return Err(Error::BadValue {
                        row,
                        column: name.to_string(),
                        reason: format!("indicator must be 0 or 1, got {v}"),
                    });
                }
            }
            if !(obs.w.is_finite() && obs.w > 0.0) {
                return Err(Error::NonpositiveWeight(row));
            }
            match (obs.s, obs.y) {
                (0, Some(_)) => return Err(Error::OutcomePresentWhenUnselected(row)),
                (1, None) => {
                    return Err(Error::BadValue {
                        row,
                        column: "y".to_string(),
                        reason: "outcome missing although the row is selected".to_string(),
                    })
                }
                (_, Some(y)) if !y.is_finite() => {
                    return Err(Error::BadValue {
                        row,
                        column: "y".to_string(),
                        reason: format!("outcome must be finite, got {y}"),
                    })
                }
                _ => {}
            }
            if obs.x.len() != covariate_names.len() {
                return Err(Error::BadValue {
                    row,
                    column: "x".to_string(),
                    reason: format!(
                        "expected {} covariates, got {}",
                        covariate_names.len(),
                        obs.x.len()
                    ),
                });
            }
            if let Some(bad) = obs.x.iter().position(|v| !v.is_finite()) {
                return Err(Error::BadValue {
                    row,
                    column: covariate_names[bad].clone(),
                    reason: "covariate must be finite".to_string(),
                });
            }
        }
        Ok(Dataset {
            observations,
            covariate_names,
        })
    }

    /// The rows, in input order.
    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Covariate names, in the order used by every row's `x` vector.
    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    /// Whether the dataset is empty (never true for a constructed dataset).
    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Total sampling weight.
    pub fn total_weight(&self) -> f64 {
        self.observations.iter().map(|o| o.w).sum()
    }

    /// Weighted share of rows satisfying `pred`, relative to total weight.
    ///
    /// This is the plug-in estimate of moments such as E(DZ) or E(S(1-D)Z)
    /// that appear in the asymptotic variance formulas.
    pub fn mass<F: Fn(&Observation) -> bool>(&self, pred: F) -> f64 {
        let mut hit = 0.0;
        for o in &self.observations {
            if pred(o) {
                hit += o.w;
            }
        }
        hit / self.total_weight()
    }

    /// Rows in cell (D = d, Z = z).
    pub fn cell_rows(&self, d: u8, z: u8) -> impl Iterator<Item = &Observation> {
        self.observations.iter().filter(move |o| o.in_cell(d, z))
    }

    /// New dataset containing the rows at `indices` (cloned, order kept).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let rows = indices
            .iter()
            .map(|&i| self.observations[i].clone())
            .collect();
        Dataset::new(rows, self.covariate_names.clone())
    }
}

/// Weighted summary of one (D, Z) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    /// Number of rows in the cell.
    pub n: usize,
    /// Total sampling weight in the cell.
    pub w_total: f64,
    /// Weighted selection probability P(S = 1 | D = d, Z = z).
    pub p_select: f64,
    /// Weighted mean outcome over selected members, if any.
    pub y_mean: Option<f64>,
    /// Weighted population variance (divides by the sum of weights) of the
    /// outcome over selected members, if any.
    pub y_var: Option<f64>,
}

/// Summarizes cell (D = d, Z = z): selection rate and selected-outcome moments.
///
/// The outcome fields stay `None` when the cell has no selected members; the
/// selection probability is still reported in that case.
pub fn cell_stats(ds: &Dataset, d: u8, z: u8) -> Result<CellStats> {
    let mut n = 0usize;
    let mut w_total = 0.0;
    let mut w_sel = 0.0;
    let mut wy = 0.0;
    for o in ds.cell_rows(d, z) {
        n += 1;
        w_total += o.w;
        if o.s == 1 {
            w_sel += o.w;
            wy += o.w * o.y.expect("selected rows carry an outcome");
        }
    }
    if n == 0 || w_total <= 0.0 {
        return Err(Error::EmptyCell { d, z });
    }
    let (y_mean, y_var) = if w_sel > 0.0 {
        let mean = wy / w_sel;
        let mut ss = 0.0;
        for o in ds.cell_rows(d, z) {
            if o.s == 1 {
                let dev = o.y.expect("selected rows carry an outcome") - mean;
                ss += o.w * dev * dev;
            }
        }
        (Some(mean), Some(ss / w_sel))
    } else {
        (None, None)
    };
    Ok(CellStats {
        n,
        w_total,
        p_select: w_sel / w_total,
        y_mean,
        y_var,
    })
}

/// Maps the logical columns to CSV header names.
///
/// The weight column is optional; when absent every row gets weight 1.
/// Missing outcomes are encoded as an empty field or the literal `NA`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Header of the outcome column.
    pub y: String,
    /// Header of the treatment column.
    pub d: String,
    /// Header of the instrument column.
    pub z: String,
    /// Header of the selection column.
    pub s: String,
    /// Header of the weight column, if any.
    #[serde(default)]
    pub w: Option<String>,
    /// Headers of covariate columns to carry along.
    #[serde(default)]
    pub covariates: Vec<String>,
}

impl CsvSchema {
    /// Schema for files whose headers are literally `y,d,z,s,w`.
    pub fn standard() -> Self {
        CsvSchema {
            y: "y".into(),
            d: "d".into(),
            z: "z".into(),
            s: "s".into(),
            w: Some("w".into()),
            covariates: Vec::new(),
        }
    }
}

/// Loads a dataset from a headed CSV file.
///
/// Rows are preserved in file order. Row numbers in errors are 1-based data
/// row indices (the header is row 0).
///
/// # Arguments
/// * `path` - CSV file with a header row
/// * `schema` - mapping from logical columns to header names
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Io(e.to_string()))?
        .clone();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        index.insert(h, i);
    }
    let col = |name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_col = col(&schema.y)?;
    let d_col = col(&schema.d)?;
    let z_col = col(&schema.z)?;
    let s_col = col(&schema.s)?;
    let w_col = match &schema.w {
        Some(name) => Some(col(name)?),
        None => None,
    };
    let x_cols = schema
        .covariates
        .iter()
        .map(|name| col(name))
        .collect::<Result<Vec<_>>>()?;

    let parse_indicator = |field: &str, row: usize, column: &str| -> Result<u8> {
        match field.trim() {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(Error::BadValue {
                row,
                column: column.to_string(),
                reason: format!("indicator must be 0 or 1, got `{other}`"),
            }),
        }
    };
    let parse_real = |field: &str, row: usize, column: &str| -> Result<f64> {
        field.trim().parse::<f64>().map_err(|_| Error::BadValue {
            row,
            column: column.to_string(),
            reason: format!("cannot parse `{field}` as a number"),
        })
    };

    let mut observations = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Io(e.to_string()))?;
        let field = |idx: usize| record.get(idx).unwrap_or("");

        let d = parse_indicator(field(d_col), row, &schema.d)?;
        let z = parse_indicator(field(z_col), row, &schema.z)?;
        let s = parse_indicator(field(s_col), row, &schema.s)?;
        let y_raw = field(y_col).trim();
        let y_missing = y_raw.is_empty() || y_raw == "NA";
        let y = match (s, y_missing) {
            (1, true) => {
                return Err(Error::BadValue {
                    row,
                    column: schema.y.clone(),
                    reason: "outcome missing although the row is selected".to_string(),
                })
            }
            (0, false) => return Err(Error::OutcomePresentWhenUnselected(row)),
            (1, false) => Some(parse_real(y_raw, row, &schema.y)?),
            (_, true) => None,
            _ => unreachable!("indicators are 0/1"),
        };
        let w = match w_col {
            Some(idx) => {
                let w = parse_real(field(idx), row, schema.w.as_deref().unwrap_or("w"))?;
                if !(w.is_finite() && w > 0.0) {
                    return Err(Error::NonpositiveWeight(row));
                }
                w
            }
            None => 1.0,
        };
        let mut x = Vec::with_capacity(x_cols.len());
        for (idx, name) in x_cols.iter().zip(&schema.covariates) {
            x.push(parse_real(field(*idx), row, name)?);
        }
        observations.push(Observation { y, d, z, s, w, x });
    }
    Dataset::new(observations, schema.covariates.clone())
}

/// Small synthetic datasets used throughout the unit and integration tests.
pub mod fixtures {
    use super::{Dataset, Observation};

    /// A 24-row dataset with unit weights whose every estimand works out to
    /// a simple closed form:
    ///
    /// * (D=0, Z=1): 4 rows, 2 selected with y ∈ {1, 2}
    /// * (D=0, Z=0): 4 rows, 3 selected with y ∈ {1, 2, 3}
    /// * (D=1, Z=0): 8 rows, 7 selected with y ∈ {1, …, 7}
    /// * (D=1, Z=1): 8 rows, 8 selected with y ∈ {1, …, 8}
    ///
    /// Selection rates are therefore (0.5, 0.75, 0.875, 1.0), giving stratum
    /// shares (0.5, 0.25, 0.125, 0.125, 0).
    pub fn ds1() -> Dataset {
        let mut rows = Vec::new();
        let mut cell = |d: u8, z: u8, total: usize, selected: usize| {
            for i in 0..total {
                if i < selected {
                    rows.push(Observation::new(Some((i + 1) as f64), d, z, 1, 1.0));
                } else {
                    rows.push(Observation::new(None, d, z, 0, 1.0));
                }
            }
        };
        cell(0, 1, 4, 2);
        cell(0, 0, 4, 3);
        cell(1, 0, 8, 7);
        cell(1, 1, 8, 8);
        Dataset::new(rows, Vec::new()).expect("fixture is valid")
    }
}
