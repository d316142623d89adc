//! Weighted quantiles and trimmed means.
//!
//! These are the kernels behind every treated-outcome bound: the lower bound
//! of a mixture component's mean is the mean of the lowest q-share of the
//! observed cell distribution, the upper bound the mean of the highest
//! q-share. Conventions, fixed once here and relied on everywhere else:
//!
//! * the weighted quantile at p is min{y in sample : F̂(y) ≥ p}, with F̂ the
//!   weighted empirical CDF using a weak inequality at atoms; p = 0 returns
//!   the sample minimum;
//! * trim sets use weak inequalities on both sides, so at an atom the lower
//!   and upper trim sets may overlap;
//! * a trim share q must lie in (0, 1]; q = 1 recovers the full mean.

use crate::error::{Error, Result};

/// Absolute tolerance on cumulative-share comparisons in [`WeightedSample::quantile`].
///
/// Large enough to absorb the rounding of share ratios and of long cumulative
/// sums (relative error ~n·ε, well below 1e-9 for n up to 10^6), small enough
/// never to merge genuinely distinct atoms of realistic samples.
const SHARE_TOLERANCE: f64 = 1e-9;

/// A nonempty sample of finite values with strictly positive finite weights,
/// held sorted by value.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    values: Vec<f64>,
    weights: Vec<f64>,
    total_weight: f64,
}

impl WeightedSample {
    /// Builds a weighted sample, sorting by value.
    ///
    /// # Arguments
    /// * `values` - sample values, any order
    /// * `weights` - matching strictly positive weights
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if values.len() != weights.len() {
            return Err(Error::InvalidConfig(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "sample values must be finite".to_string(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidConfig(
                "weights must be strictly positive and finite".to_string(),
            ));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let sorted_weights: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
        let total_weight = sorted_weights.iter().sum();
        Ok(WeightedSample {
            values: sorted_values,
            weights: sorted_weights,
            total_weight,
        })
    }

    /// Builds an equally weighted sample.
    pub fn unweighted(values: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; values.len()];
        WeightedSample::new(values, weights)
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false: construction rejects empty samples.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sum of weights.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Smallest value.
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    /// Largest value.
    pub fn max(&self) -> f64 {
        *self.values.last().expect("sample is nonempty")
    }

    /// Weighted mean.
    pub fn mean(&self) -> f64 {
        let wy: f64 = self
            .values
            .iter()
            .zip(&self.weights)
            .map(|(y, w)| y * w)
            .sum();
        wy / self.total_weight
    }

    /// Weighted population variance (divides by the sum of weights).
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let ss: f64 = self
            .values
            .iter()
            .zip(&self.weights)
            .map(|(y, w)| w * (y - mean) * (y - mean))
            .sum();
        ss / self.total_weight
    }

    /// The weighted quantile at probability `p`.
    ///
    /// Returns the smallest sample value whose cumulative weight share
    /// reaches `p`; `p = 0` returns the sample minimum. The comparison
    /// carries a 1e-9 absolute tolerance so that probabilities produced by
    /// ratio arithmetic (for example a mixing share π/p(d,z)) still land on
    /// the atom they equal in exact arithmetic.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidShare(p));
        }
        let mut cum = 0.0;
        for (y, w) in self.values.iter().zip(&self.weights) {
            cum += w;
            if cum / self.total_weight >= p - SHARE_TOLERANCE {
                return Ok(*y);
            }
        }
        // Reachable only through accumulated rounding; the last value always
        // satisfies the defining inequality in exact arithmetic.
        Ok(self.max())
    }

    /// Weighted mean of the lowest `q` share: mean over {y ≤ quantile(q)}.
    ///
    /// `q = 1` returns the full weighted mean.
    pub fn trimmed_mean_lower(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidShare(q));
        }
        let cut = self.quantile(q)?;
        self.mean_where(|y| y <= cut)
    }

    /// Weighted mean of the highest `q` share: mean over {y ≥ quantile(1 − q)}.
    ///
    /// `q = 1` returns the full weighted mean.
    pub fn trimmed_mean_upper(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidShare(q));
        }
        let cut = self.quantile(1.0 - q)?;
        self.mean_where(|y| y >= cut)
    }

    /// Weighted population variance over the lower trim set {y ≤ quantile(q)}.
    pub fn trimmed_variance_lower(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidShare(q));
        }
        let cut = self.quantile(q)?;
        self.variance_where(|y| y <= cut)
    }

    /// Weighted population variance over the upper trim set
    /// {y ≥ quantile(1 − q)}.
    pub fn trimmed_variance_upper(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidShare(q));
        }
        let cut = self.quantile(1.0 - q)?;
        self.variance_where(|y| y >= cut)
    }

    fn mean_where<F: Fn(f64) -> bool>(&self, keep: F) -> Result<f64> {
        let mut w_in = 0.0;
        let mut wy = 0.0;
        for (y, w) in self.values.iter().zip(&self.weights) {
            if keep(*y) {
                w_in += w;
                wy += w * y;
            }
        }
        if w_in <= 0.0 {
            return Err(Error::DegenerateTrim);
        }
        Ok(wy / w_in)
    }

    fn variance_where<F: Fn(f64) -> bool>(&self, keep: F) -> Result<f64> {
        let mean = self.mean_where(&keep)?;
        let mut w_in = 0.0;
        let mut ss = 0.0;
        for (y, w) in self.values.iter().zip(&self.weights) {
            if keep(*y) {
                w_in += w;
                ss += w * (y - mean) * (y - mean);
            }
        }
        Ok(ss / w_in)
    }
}
