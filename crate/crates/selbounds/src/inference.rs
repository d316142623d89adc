//! Asymptotic and resampling inference for the stratum bounds.
//!
//! Three layers:
//!
//! * closed-form GMM asymptotic variances for the point identified untreated
//!   means and for the trimmed treated-bound estimators, including the
//!   covariance of the per-instrument bound estimators;
//! * a weighted nonparametric bootstrap for estimators that involve observed
//!   support endpoints (strata T4 and T12), where no tractable formula
//!   exists;
//! * interval constructions: Imbens–Manski confidence intervals for the
//!   partially identified effect, and simulation-based intersection-bound
//!   adjustments (half-median-unbiased bound estimates and confidence
//!   intervals) in the style of Chernozhukov, Lee, and Rosen.
//!
//! All closed-form variances are on the √n scale: the standard error of an
//! estimator with asymptotic variance V is sqrt(V / n).
//!
//! # References
//!
//! Imbens, G. W. and C. F. Manski (2004). Confidence intervals for partially
//! identified parameters. Econometrica 72(6).
//!
//! Chernozhukov, V., S. Lee, and A. M. Rosen (2013). Intersection bounds:
//! estimation and inference. Econometrica 81(2).
//!
//! Lee, D. S. (2009). Training, wages, and sample selection: estimating
//! sharp bounds on treatment effects. Review of Economic Studies 76(3).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bounds::{cell_outcomes, Interval, Regime, TypeBounds, Y0};
use crate::data::{cell_stats, Dataset};
use crate::dominance::bounds_for_regime;
use crate::error::{Error, Result};
use crate::strata::{cell_share, stratum_proportions, ProportionSet, StratumId};

/// Which end of an interval an estimator targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundSide {
    /// Lower bound.
    Lb,
    /// Upper bound.
    Ub,
}

/// The construction behind a confidence band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CiMethod {
    /// One-sided-z extension of each endpoint (Imbens and Manski 2004).
    ImbensManski,
    /// Simulation-adjusted intersection bounds (Chernozhukov, Lee, Rosen).
    Clr,
}

/// A confidence band for the partially identified effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CIBand {
    /// Lower edge.
    pub lo: f64,
    /// Upper edge.
    pub hi: f64,
    /// Nominal coverage level in (0, 1).
    pub level: f64,
    /// How the band was built.
    pub method: CiMethod,
}

/// The standard normal quantile at `p`.
fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal has valid parameters")
        .inverse_cdf(p)
}

/// Weighted share of rows satisfying `pred` that are also selected members
/// of cell (d, z): the plug-in for E[S·1(D=d)·1(Z=z)].
fn selected_mass(ds: &Dataset, d: u8, z: u8) -> f64 {
    ds.mass(|o| o.s == 1 && o.in_cell(d, z))
}

/// Weighted share of rows in cell (d, z): the plug-in for E[1(D=d)·1(Z=z)].
fn cell_mass(ds: &Dataset, d: u8, z: u8) -> f64 {
    ds.mass(|o| o.in_cell(d, z))
}

/// Asymptotic variance of the untreated mean of stratum T1.
///
/// V = Var(Y | S=1, D=0, Z=1) / E[S(1−D)Z]: the estimator is the weighted
/// mean of a cell whose only member is T1.
pub fn var_y0_t1(ds: &Dataset) -> Result<f64> {
    let st = cell_stats(ds, 0, 1)?;
    let var = st.y_var.ok_or(Error::NoSelectedInCell { d: 0, z: 1 })?;
    Ok(var / selected_mass(ds, 0, 1))
}

/// Asymptotic variance of the untreated mean of stratum T2, and the
/// covariance of that estimator with the T1 untreated mean.
///
/// The estimator inverts the two-component mixture of cell (0,0), so its
/// variance carries four components: the sampling noise of the two cell
/// means and of the two selection-rate estimates behind π1 and π1 + π2.
/// The reported covariance is π1·Var(Y|S=1,D=0,Z=1)/(π2·E[S(1−D)Z]); its
/// magnitude is the loading of the mixture inversion on the T1 mean times
/// that mean's variance.
pub fn var_y0_t2(ds: &Dataset, props: &ProportionSet) -> Result<(f64, f64)> {
    if props.pi2 <= 0.0 {
        return Err(Error::ZeroPi2);
    }
    let (pi1, pi2) = (props.pi1, props.pi2);
    let st01 = cell_stats(ds, 0, 1)?;
    let st00 = cell_stats(ds, 0, 0)?;
    let v01 = st01.y_var.ok_or(Error::NoSelectedInCell { d: 0, z: 1 })?;
    let v012 = st00.y_var.ok_or(Error::NoSelectedInCell { d: 0, z: 0 })?;
    let mu01 = st01.y_mean.expect("variance implies a mean");
    let mu012 = st00.y_mean.expect("variance implies a mean");
    let mu02 = (mu012 * (pi1 + pi2) - mu01 * pi1) / pi2;

    let m_s01 = selected_mass(ds, 0, 1);
    let m_s00 = selected_mass(ds, 0, 0);
    let m01 = cell_mass(ds, 0, 1);
    let m00 = cell_mass(ds, 0, 0);

    let pi2_sq = pi2 * pi2;
    let var = pi1 * pi1 * v01 / (pi2_sq * m_s01)
        + (pi1 + pi2) * (pi1 + pi2) * v012 / (pi2_sq * m_s00)
        + pi1 * (1.0 - pi1) * (mu02 - mu01).powi(2) / (pi2_sq * m01)
        + (pi1 + pi2) * (1.0 - pi1 - pi2) * (mu02 - mu012).powi(2) / (pi2_sq * m00);
    let cov = pi1 * v01 / (pi2 * m_s01);
    Ok((var, cov))
}

/// The two selected cells whose selection-rate contrast identifies
/// `stratum`'s share, as (d, z) pairs ordered (larger rate, smaller rate).
///
/// These rates enter the trim-share variance `V_p` and the cross-instrument
/// covariance of the bound estimators.
fn share_cells(stratum: StratumId) -> [(u8, u8); 2] {
    match stratum {
        // π1 = p(0,1) is a single rate; the duplicate entry is never used.
        StratumId::T1 => [(0, 1), (0, 1)],
        StratumId::T2 => [(0, 0), (0, 1)],
        StratumId::T4 => [(1, 0), (0, 0)],
        StratumId::T12 => [(1, 1), (1, 0)],
        StratumId::T16 => unreachable!("T16 has no bound estimators"),
    }
}

/// Sum of the share-estimation terms that appear in both `V_p` and the
/// cross-instrument covariance: Σ aᵢ(1−aᵢ)/(π_T²·mᵢ) over the cells behind
/// the stratum share (for T1 a single term (1−π1)/(π1·m)).
fn share_variance_terms(ds: &Dataset, stratum: StratumId, props: &ProportionSet) -> Result<f64> {
    let pi = props.share(stratum);
    if stratum == StratumId::T1 {
        let (d, z) = share_cells(stratum)[0];
        let a = cell_stats(ds, d, z)?.p_select;
        return Ok((1.0 - a) / (a * cell_mass(ds, d, z)));
    }
    let mut sum = 0.0;
    for (d, z) in share_cells(stratum) {
        let a = cell_stats(ds, d, z)?.p_select;
        sum += a * (1.0 - a) / (pi * pi * cell_mass(ds, d, z));
    }
    Ok(sum)
}

/// The side-specific trim objects of the treated cell at `z`: the trim
/// threshold, the trimmed mean, and the trimmed variance at share `q`.
fn trim_objects(ds: &Dataset, z: u8, q: f64, side: BoundSide) -> Result<(f64, f64, f64)> {
    let cell = cell_outcomes(ds, 1, z)?;
    Ok(match side {
        BoundSide::Lb => (
            cell.quantile(q)?,
            cell.trimmed_mean_lower(q)?,
            cell.trimmed_variance_lower(q)?,
        ),
        BoundSide::Ub => (
            cell.quantile(1.0 - q)?,
            cell.trimmed_mean_upper(q)?,
            cell.trimmed_variance_upper(q)?,
        ),
    })
}

/// Asymptotic variance of the trimmed treated-bound estimator for
/// `stratum` at instrument value `z`.
///
/// Three terms: the trimmed conditional variance, a threshold-gap term from
/// estimating the trim quantile, and a term propagating the sampling noise
/// of the trim share itself,
///
/// V = TrimVar/(M·p₀) + gap²(1−p₀)/(M·p₀) + gap²/p₀²·V_p,
///
/// with M the selected mass of the treated cell, p₀ the stratum's mixing
/// share in it, gap the threshold-to-trimmed-mean distance, and V_p the
/// variance of p̂₀ (a cell-rate term plus the share terms behind π_T).
pub fn var_trim_bound(
    ds: &Dataset,
    stratum: StratumId,
    z: u8,
    side: BoundSide,
    props: &ProportionSet,
) -> Result<f64> {
    if stratum == StratumId::T16 {
        return Err(Error::UnsupportedStratum(stratum));
    }
    let q = cell_share(props, stratum, 1, z)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidShare(q));
    }
    let (y_q, mu, trim_var) = trim_objects(ds, z, q, side)?;
    let gap = y_q - mu;
    let m_sel = selected_mass(ds, 1, z);
    let term1 = trim_var / (m_sel * q);
    let term2 = gap * gap * (1.0 - q) / (m_sel * q);

    // V_p: the selection rate of the treated cell itself, then the share
    // terms fixed across z.
    let s_rate = cell_stats(ds, 1, z)?.p_select;
    let rate_term = (1.0 - s_rate) / (s_rate * cell_mass(ds, 1, z));
    let v_p = q * q * (rate_term + share_variance_terms(ds, stratum, props)?);
    let term3 = gap * gap / (q * q) * v_p;
    Ok(term1 + term2 + term3)
}

/// Asymptotic covariance between the per-instrument trimmed bound
/// estimators of `stratum` for one side.
///
/// The two estimators live in disjoint treated cells; they correlate only
/// through the shared share estimates behind π_T, giving
/// gap(z=1)·gap(z=0)·Σ aᵢ(1−aᵢ)/(π_T²·mᵢ). The sign is the product of the
/// two threshold-gap signs.
pub fn cov_across_z(
    ds: &Dataset,
    stratum: StratumId,
    side: BoundSide,
    props: &ProportionSet,
) -> Result<f64> {
    if crate::bounds::treated_z_values(stratum).len() < 2 {
        return Err(Error::StratumNotInCell {
            stratum,
            s: 1,
            d: 1,
            z: 0,
        });
    }
    let mut gaps = [0.0; 2];
    for (i, z) in [0u8, 1u8].into_iter().enumerate() {
        let q = cell_share(props, stratum, 1, z)?;
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidShare(q));
        }
        let (y_q, mu, _) = trim_objects(ds, z, q, side)?;
        gaps[i] = y_q - mu;
    }
    Ok(gaps[0] * gaps[1] * share_variance_terms(ds, stratum, props)?)
}

/// Asymptotic variance of the untrimmed selected-cell mean at (D=1, Z=z):
/// Var(Y|S=1,D=1,Z=z)/E[S·D·1(Z=z)]. Used for bound coordinates that are
/// plain cell means under the dominance regimes.
fn var_cell_mean(ds: &Dataset, z: u8) -> Result<f64> {
    let st = cell_stats(ds, 1, z)?;
    let var = st.y_var.ok_or(Error::NoSelectedInCell { d: 1, z })?;
    Ok(var / selected_mass(ds, 1, z))
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

/// How bootstrap resamples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ResampleScheme {
    /// Rows are drawn with replacement from the pooled dataset.
    #[default]
    Pooled,
    /// Rows are drawn with replacement within each (D, Z) cell, keeping
    /// every cell's row count fixed.
    ByCell,
}

/// Dispersion summary of a scalar bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapSummary {
    /// Standard deviation of the statistic over the completed replicates.
    pub se: f64,
    /// Replicates on which the statistic was defined.
    pub completed: usize,
    /// Replicates dropped because the statistic was undefined.
    pub degenerate: usize,
}

/// Joint dispersion summary of a vector bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapMatrix {
    /// Per-coordinate standard deviations.
    pub ses: Vec<f64>,
    /// Sample covariance matrix over the completed replicates.
    #[serde(skip)]
    pub cov: DMatrix<f64>,
    /// Replicates on which the statistic was defined.
    pub completed: usize,
    /// Replicates dropped because the statistic was undefined.
    pub degenerate: usize,
}

/// Derives an independent per-replicate seed from a master seed and an
/// index (splitmix64 finalizer), so results do not depend on how replicates
/// are scheduled across workers.
pub(crate) fn derive_seed(master: u64, index: u64) -> u64 {
    let mut x = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// One bootstrap resample: rows drawn with replacement, realized as count
/// reweighting (a row drawn c times keeps weight c·w), which is equivalent
/// to duplication for every weighted plug-in statistic.
fn resample(ds: &Dataset, rng: &mut ChaCha12Rng, scheme: ResampleScheme) -> Result<Dataset> {
    let n = ds.len();
    let mut counts = vec![0u32; n];
    match scheme {
        ResampleScheme::Pooled => {
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
        }
        ResampleScheme::ByCell => {
            let mut cells: std::collections::HashMap<(u8, u8), Vec<usize>> =
                std::collections::HashMap::new();
            for (i, o) in ds.observations().iter().enumerate() {
                cells.entry((o.d, o.z)).or_default().push(i);
            }
            let mut keys: Vec<_> = cells.keys().copied().collect();
            keys.sort_unstable();
            for key in keys {
                let rows = &cells[&key];
                for _ in 0..rows.len() {
                    counts[rows[rng.random_range(0..rows.len())]] += 1;
                }
            }
        }
    }
    let mut rows = Vec::with_capacity(n);
    for (i, o) in ds.observations().iter().enumerate() {
        if counts[i] > 0 {
            let mut copy = o.clone();
            copy.w *= f64::from(counts[i]);
            rows.push(copy);
        }
    }
    Dataset::new(rows, ds.covariate_names().to_vec())
}

fn run_bootstrap<T, F>(
    ds: &Dataset,
    statistic: F,
    b: usize,
    seed: u64,
    scheme: ResampleScheme,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Dataset) -> Result<T> + Sync,
{
    if b < 100 {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least 100 replicates, got {b}"
        )));
    }
    Ok((0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, i as u64));
            let rs = resample(ds, &mut rng, scheme).ok()?;
            statistic(&rs).ok()
        })
        .collect::<Vec<Option<T>>>()
        .into_iter()
        .flatten()
        .collect())
}

/// Bootstrap standard error of a scalar statistic under the pooled scheme.
///
/// Rows are resampled with replacement `b` times; replicates where the
/// statistic is undefined are recorded and excluded. Deterministic for a
/// fixed seed regardless of thread count.
pub fn bootstrap_se<F>(ds: &Dataset, statistic: F, b: usize, seed: u64) -> Result<BootstrapSummary>
where
    F: Fn(&Dataset) -> Result<f64> + Sync,
{
    bootstrap_se_with(ds, statistic, b, seed, ResampleScheme::Pooled)
}

/// [`bootstrap_se`] with an explicit resampling scheme.
pub fn bootstrap_se_with<F>(
    ds: &Dataset,
    statistic: F,
    b: usize,
    seed: u64,
    scheme: ResampleScheme,
) -> Result<BootstrapSummary>
where
    F: Fn(&Dataset) -> Result<f64> + Sync,
{
    let values = run_bootstrap(ds, statistic, b, seed, scheme)?;
    let completed = values.len();
    if completed < 2 {
        return Err(Error::DegenerateResample {
            completed,
            attempted: b,
        });
    }
    let mean = values.iter().sum::<f64>() / completed as f64;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    Ok(BootstrapSummary {
        se: (ss / (completed - 1) as f64).sqrt(),
        completed,
        degenerate: b - completed,
    })
}

/// Bootstrap standard errors and covariance matrix of a vector statistic.
///
/// Replicates where the statistic is undefined (or changes arity) are
/// recorded and excluded.
pub fn bootstrap_cov<F>(
    ds: &Dataset,
    statistic: F,
    b: usize,
    seed: u64,
    scheme: ResampleScheme,
) -> Result<BootstrapMatrix>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    let values = run_bootstrap(ds, statistic, b, seed, scheme)?;
    let Some(dim) = values.first().map(Vec::len) else {
        return Err(Error::DegenerateResample {
            completed: 0,
            attempted: b,
        });
    };
    let rows: Vec<&Vec<f64>> = values.iter().filter(|v| v.len() == dim).collect();
    let completed = rows.len();
    if completed < 2 {
        return Err(Error::DegenerateResample {
            completed,
            attempted: b,
        });
    }
    let mut mean = vec![0.0; dim];
    for row in &rows {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= completed as f64;
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for row in &rows {
        for i in 0..dim {
            for j in 0..dim {
                cov[(i, j)] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    cov /= (completed - 1) as f64;
    let ses = (0..dim).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    Ok(BootstrapMatrix {
        ses,
        cov,
        completed,
        degenerate: b - completed,
    })
}

// ---------------------------------------------------------------------------
// Confidence intervals
// ---------------------------------------------------------------------------

/// Imbens–Manski confidence band for a partially identified parameter:
/// each endpoint is extended outward by the one-sided normal quantile at
/// `level` times its standard error, (lb − z·se_lb, ub + z·se_ub).
pub fn im_ci(ate: &Interval, se_lb: f64, se_ub: f64, level: f64) -> CIBand {
    let z = normal_quantile(level);
    CIBand {
        lo: ate.lb - z * se_lb,
        hi: ate.ub + z * se_ub,
        level,
        method: CiMethod::ImbensManski,
    }
}

/// Draws `sims` mean-zero Gaussian vectors with the given correlation
/// structure, row-major (`sims` × k).
fn simulate_correlated(corr: &DMatrix<f64>, sims: usize, seed: u64) -> Result<Vec<f64>> {
    let k = corr.nrows();
    let factor = psd_factor(corr)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(sims * k);
    let mut z = DVector::zeros(k);
    for _ in 0..sims {
        for v in z.iter_mut() {
            *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let w = &factor * &z;
        draws.extend(w.iter());
    }
    Ok(draws)
}

/// Symmetric square root of a PSD matrix via its eigendecomposition, with
/// small negative eigenvalues (numerical noise) clamped to zero.
fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let tol = 1e-8 * max_abs.max(1.0);
    if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l < -tol) {
        return Err(Error::NonPsdCovariance(format!(
            "eigenvalue {bad:.6e} is negative beyond tolerance"
        )));
    }
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * sqrt)
}

/// Empirical `p`-quantile (smallest order statistic with cumulative share
/// at least `p`) of an unsorted sample.
fn empirical_quantile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    let n = values.len();
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
    values[idx]
}

/// Simulated `p`-quantile of the max over coordinates of a mean-zero
/// Gaussian vector with correlation matrix `corr`.
///
/// This is the critical value κ(p) behind the intersection-bound
/// adjustment; it is computed by direct Monte Carlo, deterministic for a
/// fixed seed.
pub fn simulated_max_quantile(
    corr: &DMatrix<f64>,
    p: f64,
    sims: usize,
    seed: u64,
) -> Result<f64> {
    if corr.nrows() == 0 || corr.nrows() != corr.ncols() {
        return Err(Error::InvalidConfig(
            "correlation matrix must be square and nonempty".to_string(),
        ));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "quantile level must lie in (0, 1), got {p}"
        )));
    }
    if sims == 0 {
        return Err(Error::InvalidConfig("need at least one draw".to_string()));
    }
    let k = corr.nrows();
    let draws = simulate_correlated(corr, sims, seed)?;
    let mut maxima: Vec<f64> = draws
        .chunks_exact(k)
        .map(|row| row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v)))
        .collect();
    Ok(empirical_quantile(&mut maxima, p))
}

/// One side of a CLR-adjusted intersection bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClrAdjusted {
    /// Which side the adjustment targets.
    pub side: BoundSide,
    /// Half-median-unbiased bound estimate (critical value at p = 1/2).
    pub bound: f64,
    /// Confidence edge at the requested level.
    pub ci_edge: f64,
    /// Critical value used for `bound`.
    pub kappa_median: f64,
    /// Critical value used for `ci_edge`.
    pub kappa_level: f64,
    /// Coordinates kept by the adaptive inequality selection.
    pub selected: Vec<usize>,
}

/// Quantile-selection threshold for the preliminary coordinate-selection
/// step. Fixed rather than sample-size dependent so a given configuration
/// is reproducible across datasets.
const CLR_SELECTION_LEVEL: f64 = 0.995;

/// CLR adjustment of an intersection bound over `estimates` with joint
/// covariance `cov` (on the scale of the estimates, i.e. already divided by
/// n).
///
/// For an upper bound, the adjusted bound at confidence level p is
/// min over coordinates of θ̂_z + κ(p)·s_z, where κ(p) is the simulated
/// p-quantile of the max over coordinates of a mean-zero Gaussian vector
/// with the estimates' correlation structure; a preliminary selection step
/// drops coordinates too slack to ever bind. The half-median-unbiased bound
/// uses p = 1/2 and the confidence edge uses p = `level`. The lower side
/// mirrors with max and −κ.
///
/// κ(p) is never allowed below the single-coordinate value Φ⁻¹(p), which
/// is also used exactly when only one stochastic coordinate remains (so a
/// single-coordinate bound at p = 1/2 is returned unadjusted). Coordinates
/// with zero standard error are excluded from the simulation but still cap
/// the final min/max.
pub fn clr_adjust(
    estimates: &[f64],
    cov: &DMatrix<f64>,
    side: BoundSide,
    level: f64,
    sims: usize,
    seed: u64,
) -> Result<ClrAdjusted> {
    if estimates.is_empty() {
        return Err(Error::EmptySample);
    }
    if cov.nrows() != estimates.len() || cov.ncols() != estimates.len() {
        return Err(Error::InvalidConfig(format!(
            "covariance is {}×{} but there are {} estimates",
            cov.nrows(),
            cov.ncols(),
            estimates.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    if sims < 10_000 {
        return Err(Error::InvalidConfig(format!(
            "the critical-value simulation needs at least 10000 draws, got {sims}"
        )));
    }
    match side {
        BoundSide::Ub => clr_upper(estimates, cov, level, sims, seed, BoundSide::Ub),
        BoundSide::Lb => {
            let negated: Vec<f64> = estimates.iter().map(|v| -v).collect();
            let adj = clr_upper(&negated, cov, level, sims, seed, BoundSide::Lb)?;
            Ok(ClrAdjusted {
                side: BoundSide::Lb,
                bound: -adj.bound,
                ci_edge: -adj.ci_edge,
                ..adj
            })
        }
    }
}

fn clr_upper(
    theta: &[f64],
    cov: &DMatrix<f64>,
    level: f64,
    sims: usize,
    seed: u64,
    side: BoundSide,
) -> Result<ClrAdjusted> {
    let k = theta.len();
    let ses: Vec<f64> = (0..k).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let max_se = ses.iter().fold(0.0f64, |a, &s| a.max(s));
    let is_active: Vec<bool> = ses.iter().map(|&s| s > 1e-12 * max_se.max(1e-300)).collect();
    let active: Vec<usize> = (0..k).filter(|&j| is_active[j]).collect();

    let finish = |kappa_median: f64, kappa_level: f64, selected: Vec<usize>| {
        let envelope = |kappa: f64| {
            selected
                .iter()
                .map(|&j| theta[j] + kappa * ses[j])
                .chain((0..k).filter(|j| !is_active[*j]).map(|j| theta[j]))
                .fold(f64::INFINITY, f64::min)
        };
        ClrAdjusted {
            side,
            bound: envelope(kappa_median),
            ci_edge: envelope(kappa_level),
            kappa_median,
            kappa_level,
            selected,
        }
    };

    // No stochastic coordinate: the intersection is deterministic.
    if active.is_empty() {
        return Ok(finish(0.0, 0.0, (0..k).collect()));
    }

    // Correlation matrix over the stochastic coordinates.
    let ka = active.len();
    let mut corr = DMatrix::zeros(ka, ka);
    for (i, &ai) in active.iter().enumerate() {
        for (j, &aj) in active.iter().enumerate() {
            corr[(i, j)] = (cov[(ai, aj)] / (ses[ai] * ses[aj])).clamp(-1.0, 1.0);
        }
    }

    // A single stochastic coordinate — alone or through perfect positive
    // correlation — has the analytic critical values Φ⁻¹(p): the median
    // adjustment is exactly zero.
    let effectively_single = ka == 1
        || (0..ka).all(|i| (0..ka).all(|j| i == j || corr[(i, j)] >= 1.0 - 1e-9));
    if effectively_single {
        return Ok(finish(0.0, normal_quantile(level), active));
    }

    let draws = simulate_correlated(&corr, sims, seed)?;
    let max_over = |subset: &[usize]| -> Vec<f64> {
        draws
            .chunks_exact(ka)
            .map(|row| {
                subset
                    .iter()
                    .fold(f64::NEG_INFINITY, |a, &j| a.max(row[j]))
            })
            .collect()
    };

    // Preliminary selection: drop coordinates that cannot bind at a
    // conservative critical value.
    let all: Vec<usize> = (0..ka).collect();
    let kappa_select = empirical_quantile(&mut max_over(&all), CLR_SELECTION_LEVEL);
    let m_star = (0..k)
        .map(|j| theta[j] + kappa_select * ses[j])
        .fold(f64::INFINITY, f64::min);
    let selected: Vec<usize> = (0..k)
        .filter(|&j| theta[j] <= m_star + 2.0 * kappa_select * ses[j])
        .collect();
    let selected_active: Vec<usize> = (0..ka)
        .filter(|&i| selected.contains(&active[i]))
        .collect();

    if selected_active.len() <= 1 {
        return Ok(finish(0.0, normal_quantile(level), selected));
    }
    let mut maxima = max_over(&selected_active);
    let kappa_median = empirical_quantile(&mut maxima, 0.5).max(0.0);
    let kappa_level = empirical_quantile(&mut maxima, level).max(normal_quantile(level));
    Ok(finish(kappa_median, kappa_level, selected))
}

// ---------------------------------------------------------------------------
// Per-stratum assembly
// ---------------------------------------------------------------------------

/// Settings for the per-stratum inference driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Nominal confidence level in (0, 1).
    pub level: f64,
    /// Draws for the CLR critical-value simulation; `None` skips the CLR
    /// adjustment.
    pub clr_sims: Option<usize>,
    /// Bootstrap replicates for support-bound-dependent strata (T4, T12);
    /// `None` leaves those strata without standard errors.
    pub bootstrap: Option<usize>,
    /// Master seed for every stochastic step.
    pub seed: u64,
    /// Bootstrap resampling scheme.
    pub scheme: ResampleScheme,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            level: 0.95,
            clr_sims: Some(10_000),
            bootstrap: None,
            seed: 0,
            scheme: ResampleScheme::Pooled,
        }
    }
}

impl InferenceConfig {
    fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Per-instrument asymptotic variances of the treated-bound coordinates
/// (√n scale). `None` where the coordinate has no closed-form variance
/// (composite bounds under the dominance regimes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZVariance {
    /// Instrument value.
    pub z: u8,
    /// Variance of the lower treated-bound coordinate.
    pub v_lb: Option<f64>,
    /// Variance of the upper treated-bound coordinate.
    pub v_ub: Option<f64>,
}

/// The closed-form variance components behind a stratum's bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    /// The stratum.
    pub stratum: StratumId,
    /// The assumption regime of the bounds.
    pub regime: Regime,
    /// Number of rows the estimates were computed from.
    pub n: usize,
    /// Asymptotic variance of the point identified untreated mean (T1, T2).
    pub v_c: Option<f64>,
    /// Covariance of the T2 and T1 untreated-mean estimators, as printed in
    /// the four-component T2 variance derivation.
    pub cov_mu02_mu01: Option<f64>,
    /// Per-instrument treated-coordinate variances.
    pub per_z: Vec<ZVariance>,
    /// Covariance of the per-instrument lower treated coordinates.
    pub cov_lb_across_z: Option<f64>,
    /// Covariance of the per-instrument upper treated coordinates.
    pub cov_ub_across_z: Option<f64>,
}

impl VarianceReport {
    /// The standard error implied by a √n-scale asymptotic variance.
    pub fn se(&self, v: f64) -> f64 {
        (v / self.n as f64).sqrt()
    }
}

/// Where a stratum's endpoint standard errors came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SeSource {
    /// Closed-form GMM variances.
    Analytic,
    /// Nonparametric bootstrap.
    Bootstrap {
        /// Completed replicates.
        replicates: usize,
        /// Replicates dropped as degenerate.
        degenerate: usize,
    },
}

/// Inference output for one stratum's ATE bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AteInference {
    /// The stratum.
    pub stratum: StratumId,
    /// The assumption regime of the bounds.
    pub regime: Regime,
    /// Number of rows.
    pub n: usize,
    /// Standard error of the ATE lower bound (binding coordinate for the
    /// analytic path, the full min/max estimator for the bootstrap path).
    pub se_lb: Option<f64>,
    /// Standard error of the ATE upper bound.
    pub se_ub: Option<f64>,
    /// Provenance of the standard errors.
    pub se_source: Option<SeSource>,
    /// Imbens–Manski confidence band.
    pub im: Option<CIBand>,
    /// Half-median-unbiased CLR bound estimates.
    pub clr_bounds: Option<Interval>,
    /// CLR confidence band.
    pub clr_ci: Option<CIBand>,
    /// Closed-form variance components.
    pub report: VarianceReport,
}

/// The closed-form variance of one treated-bound coordinate under a given
/// regime, when one exists.
fn coord_variance(
    ds: &Dataset,
    stratum: StratumId,
    regime: Regime,
    z: u8,
    side: BoundSide,
    props: &ProportionSet,
) -> Option<f64> {
    let md1 = matches!(regime, Regime::Md1 | Regime::Md0Md1);
    match (stratum, side) {
        // Lower coordinates are untrimmed cell means for T1 under treated
        // dominance; otherwise the stratum's own lower trim.
        (StratumId::T1, BoundSide::Lb) if md1 => var_cell_mean(ds, z).ok(),
        (StratumId::T2, BoundSide::Ub) if md1 => {
            var_trim_bound(ds, StratumId::T1, z, BoundSide::Ub, props).ok()
        }
        (StratumId::T4, BoundSide::Ub) if md1 => {
            // z = 0 mixes a trim with the cell mean; only the z = 1
            // coordinate stays a pure trim at the T1 share.
            (z == 1)
                .then(|| var_trim_bound(ds, StratumId::T1, z, BoundSide::Ub, props).ok())
                .flatten()
        }
        (StratumId::T12, BoundSide::Ub) if md1 => var_cell_mean(ds, z).ok(),
        _ => var_trim_bound(ds, stratum, z, side, props).ok(),
    }
}

/// The closed-form cross-instrument covariance of the treated-bound
/// coordinates for one side under a given regime, when one exists.
fn coord_cov_across_z(
    ds: &Dataset,
    stratum: StratumId,
    regime: Regime,
    side: BoundSide,
    props: &ProportionSet,
) -> Option<f64> {
    if crate::bounds::treated_z_values(stratum).len() < 2 {
        return None;
    }
    let md1 = matches!(regime, Regime::Md1 | Regime::Md0Md1);
    match (stratum, side) {
        // Cell means at z = 0 and z = 1 come from disjoint samples.
        (StratumId::T1, BoundSide::Lb) if md1 => Some(0.0),
        (StratumId::T2, BoundSide::Ub) if md1 => {
            cov_across_z(ds, StratumId::T1, BoundSide::Ub, props).ok()
        }
        (StratumId::T4, BoundSide::Ub) if md1 => None,
        _ => cov_across_z(ds, stratum, side, props).ok(),
    }
}

fn variance_report(
    ds: &Dataset,
    bounds: &TypeBounds,
    props: &ProportionSet,
) -> Result<VarianceReport> {
    let (v_c, cov_print) = match bounds.stratum {
        StratumId::T1 => (Some(var_y0_t1(ds)?), None),
        StratumId::T2 => {
            let (v, c) = var_y0_t2(ds, props)?;
            (Some(v), Some(c))
        }
        _ => (None, None),
    };
    let per_z = bounds
        .treated_by_z
        .iter()
        .map(|&(z, _)| ZVariance {
            z,
            v_lb: coord_variance(ds, bounds.stratum, bounds.regime, z, BoundSide::Lb, props),
            v_ub: coord_variance(ds, bounds.stratum, bounds.regime, z, BoundSide::Ub, props),
        })
        .collect();
    Ok(VarianceReport {
        stratum: bounds.stratum,
        regime: bounds.regime,
        n: ds.len(),
        v_c,
        cov_mu02_mu01: cov_print,
        per_z,
        cov_lb_across_z: coord_cov_across_z(ds, bounds.stratum, bounds.regime, BoundSide::Lb, props),
        cov_ub_across_z: coord_cov_across_z(ds, bounds.stratum, bounds.regime, BoundSide::Ub, props),
    })
}

/// Confidence statements for one stratum's ATE bounds.
///
/// Strata with point identified untreated means (T1, T2) get closed-form
/// standard errors: each per-instrument ATE coordinate has variance
/// (V_side(z) + V_C)/n, the shared untreated term contributing V_C to every
/// coordinate and to every cross-instrument covariance. The Imbens–Manski
/// band extends each intersected endpoint by the one-sided normal quantile
/// times the binding coordinate's standard error; the CLR adjustment treats
/// the per-instrument coordinates jointly.
///
/// Strata whose bounds involve observed support endpoints (T4, T12) have no
/// closed-form theory; when `cfg.bootstrap` is set, the endpoint standard
/// errors and the coordinate covariances are bootstrapped, and the same
/// interval constructions apply. Without a bootstrap budget those strata
/// report bounds only.
pub fn ate_inference(
    ds: &Dataset,
    bounds: &TypeBounds,
    props: &ProportionSet,
    cfg: &InferenceConfig,
) -> Result<AteInference> {
    cfg.validate()?;
    if bounds.stratum == StratumId::T16 {
        return Err(Error::UnsupportedStratum(bounds.stratum));
    }
    let report = variance_report(ds, bounds, props)?;
    match bounds.y0 {
        Y0::Point(_) => analytic_inference(ds, bounds, props, cfg, report),
        Y0::Range { .. } => bootstrap_inference(ds, bounds, props, cfg, report),
    }
}

fn analytic_inference(
    ds: &Dataset,
    bounds: &TypeBounds,
    _props: &ProportionSet,
    cfg: &InferenceConfig,
    report: VarianceReport,
) -> Result<AteInference> {
    let n = ds.len() as f64;
    let v_c = report.v_c.expect("analytic path requires V_C");
    let missing = |what: &str| {
        Error::InvalidConfig(format!(
            "no closed-form variance for the {what} coordinate of {} under {}",
            bounds.stratum, bounds.regime
        ))
    };
    let y0 = match bounds.y0 {
        Y0::Point(v) => v,
        Y0::Range { .. } => unreachable!("analytic path requires a point y0"),
    };

    let k = bounds.treated_by_z.len();
    let mut lb_coords = Vec::with_capacity(k);
    let mut ub_coords = Vec::with_capacity(k);
    let mut lb_vars = Vec::with_capacity(k);
    let mut ub_vars = Vec::with_capacity(k);
    for (zv, &(_, iv)) in report.per_z.iter().zip(bounds.treated_by_z.iter()) {
        lb_coords.push(iv.lb - y0);
        ub_coords.push(iv.ub - y0);
        lb_vars.push(zv.v_lb.ok_or_else(|| missing("lower"))? + v_c);
        ub_vars.push(zv.v_ub.ok_or_else(|| missing("upper"))? + v_c);
    }

    let binding_lb = (0..k)
        .max_by(|&a, &b| lb_coords[a].total_cmp(&lb_coords[b]))
        .expect("at least one instrument value");
    let binding_ub = (0..k)
        .min_by(|&a, &b| ub_coords[a].total_cmp(&ub_coords[b]))
        .expect("at least one instrument value");
    let se_lb = (lb_vars[binding_lb] / n).sqrt();
    let se_ub = (ub_vars[binding_ub] / n).sqrt();
    let im = im_ci(&bounds.ate, se_lb, se_ub, cfg.level);

    let (mut clr_bounds, mut clr_ci) = (None, None);
    if let Some(sims) = cfg.clr_sims {
        let cov_side = |vars: &[f64], cross: Option<f64>| {
            let mut m = DMatrix::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    m[(i, j)] = if i == j {
                        vars[i] / n
                    } else {
                        (cross.unwrap_or(0.0) + v_c) / n
                    };
                }
            }
            m
        };
        let lb_adj = clr_adjust(
            &lb_coords,
            &cov_side(&lb_vars, report.cov_lb_across_z),
            BoundSide::Lb,
            cfg.level,
            sims,
            derive_seed(cfg.seed, 1),
        )?;
        let ub_adj = clr_adjust(
            &ub_coords,
            &cov_side(&ub_vars, report.cov_ub_across_z),
            BoundSide::Ub,
            cfg.level,
            sims,
            derive_seed(cfg.seed, 2),
        )?;
        clr_bounds = Some(Interval::new(lb_adj.bound, ub_adj.bound));
        clr_ci = Some(CIBand {
            lo: lb_adj.ci_edge,
            hi: ub_adj.ci_edge,
            level: cfg.level,
            method: CiMethod::Clr,
        });
    }

    Ok(AteInference {
        stratum: bounds.stratum,
        regime: bounds.regime,
        n: ds.len(),
        se_lb: Some(se_lb),
        se_ub: Some(se_ub),
        se_source: Some(SeSource::Analytic),
        im: Some(im),
        clr_bounds,
        clr_ci,
        report,
    })
}

fn bootstrap_inference(
    ds: &Dataset,
    bounds: &TypeBounds,
    _props: &ProportionSet,
    cfg: &InferenceConfig,
    report: VarianceReport,
) -> Result<AteInference> {
    let Some(b) = cfg.bootstrap else {
        return Ok(AteInference {
            stratum: bounds.stratum,
            regime: bounds.regime,
            n: ds.len(),
            se_lb: None,
            se_ub: None,
            se_source: None,
            im: None,
            clr_bounds: None,
            clr_ci: None,
            report,
        });
    };
    let stratum = bounds.stratum;
    let regime = bounds.regime;
    let k = bounds.treated_by_z.len();

    // Statistic: the two ATE endpoints, then the per-instrument lower and
    // upper ATE coordinates, recomputed from scratch on each resample.
    let statistic = move |rs: &Dataset| -> Result<Vec<f64>> {
        let p = stratum_proportions(rs)?;
        let tb = bounds_for_regime(rs, stratum, regime, &p)?;
        let y0_ends = match tb.y0 {
            Y0::Point(v) => (v, v),
            Y0::Range { lb, ub } => (lb, ub),
        };
        let mut out = Vec::with_capacity(2 + 2 * k);
        out.push(tb.ate.lb);
        out.push(tb.ate.ub);
        for &(_, iv) in &tb.treated_by_z {
            out.push(iv.lb - y0_ends.1);
        }
        for &(_, iv) in &tb.treated_by_z {
            out.push(iv.ub - y0_ends.0);
        }
        Ok(out)
    };
    let bm = bootstrap_cov(ds, statistic, b, derive_seed(cfg.seed, 0), cfg.scheme)?;
    if bm.ses.len() != 2 + 2 * k {
        return Err(Error::DegenerateResample {
            completed: bm.completed,
            attempted: b,
        });
    }
    let se_lb = bm.ses[0];
    let se_ub = bm.ses[1];
    let im = im_ci(&bounds.ate, se_lb, se_ub, cfg.level);

    let (mut clr_bounds, mut clr_ci) = (None, None);
    if let Some(sims) = cfg.clr_sims {
        let y0_ends = match bounds.y0 {
            Y0::Point(v) => (v, v),
            Y0::Range { lb, ub } => (lb, ub),
        };
        let lb_coords: Vec<f64> = bounds
            .treated_by_z
            .iter()
            .map(|&(_, iv)| iv.lb - y0_ends.1)
            .collect();
        let ub_coords: Vec<f64> = bounds
            .treated_by_z
            .iter()
            .map(|&(_, iv)| iv.ub - y0_ends.0)
            .collect();
        let block = |offset: usize| {
            let mut m = DMatrix::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    m[(i, j)] = bm.cov[(offset + i, offset + j)];
                }
            }
            m
        };
        let lb_adj = clr_adjust(
            &lb_coords,
            &block(2),
            BoundSide::Lb,
            cfg.level,
            sims,
            derive_seed(cfg.seed, 1),
        )?;
        let ub_adj = clr_adjust(
            &ub_coords,
            &block(2 + k),
            BoundSide::Ub,
            cfg.level,
            sims,
            derive_seed(cfg.seed, 2),
        )?;
        clr_bounds = Some(Interval::new(lb_adj.bound, ub_adj.bound));
        clr_ci = Some(CIBand {
            lo: lb_adj.ci_edge,
            hi: ub_adj.ci_edge,
            level: cfg.level,
            method: CiMethod::Clr,
        });
    }

    Ok(AteInference {
        stratum: bounds.stratum,
        regime: bounds.regime,
        n: ds.len(),
        se_lb: Some(se_lb),
        se_ub: Some(se_ub),
        se_source: Some(SeSource::Bootstrap {
            replicates: bm.completed,
            degenerate: bm.degenerate,
        }),
        im: Some(im),
        clr_bounds,
        clr_ci,
        report,
    })
}
