//! Sum-of-squares statistics: CQ, BS and the Oracle restriction of CQ.

use ndarray::Array2;

use super::components::ComponentStats;
use super::outcome::{Method, PValueSource, TestOutcome};
use crate::data::{centered, TwoSampleData};
use crate::dist::{normal_sf, normal_upper_quantile};
use crate::error::{Error, Result};

/// Default band for the plug-in null variance, capped at p − 1.
pub const DEFAULT_VARIANCE_BAND: usize = 30;

/// T̃_n = n Σ_k T_nk / scale_k.
pub fn cq_statistic(cs: &ComponentStats) -> f64 {
    (0..cs.p()).map(|k| cs.std_t(k)).sum()
}

/// M̃_n = n Σ_k M_nk / scale_k − p.
pub fn bs_statistic(cs: &ComponentStats) -> f64 {
    (0..cs.p()).map(|k| cs.std_m(k)).sum::<f64>() - cs.p() as f64
}

/// O_n = n Σ_{k∈S} T_nk / scale_k over a known signal set.
pub fn oracle_statistic(cs: &ComponentStats, signal_set: &[usize]) -> Result<f64> {
    check_index_set(signal_set, cs.p())?;
    Ok(signal_set.iter().map(|&k| cs.std_t(k)).sum())
}

fn check_index_set(set: &[usize], p: usize) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InvalidInput("signal set is empty".into()));
    }
    if let Some(&k) = set.iter().find(|&&k| k >= p) {
        return Err(Error::InvalidInput(format!("index {k} out of range for p = {p}")));
    }
    Ok(())
}

/// Correlations of the coordinates of √n(X̄₁ − X̄₂) estimated from the two
/// samples' centred cross products.
struct MeanDiffCorrelation {
    /// Centred sample 1, one contiguous row per coordinate.
    c1: Array2<f64>,
    c2: Array2<f64>,
    w1: f64,
    w2: f64,
    diag: Vec<f64>,
    dof: f64,
}

impl MeanDiffCorrelation {
    fn new(data: &TwoSampleData) -> Self {
        let (n1, n2) = (data.n1() as f64, data.n2() as f64);
        let c1 = centered(data.x1()).reversed_axes().as_standard_layout().into_owned();
        let c2 = centered(data.x2()).reversed_axes().as_standard_layout().into_owned();
        let mut me = MeanDiffCorrelation {
            c1,
            c2,
            w1: 1.0 / (n1 * (n1 - 1.0)),
            w2: 1.0 / (n2 * (n2 - 1.0)),
            diag: Vec::new(),
            dof: n1 + n2 - 2.0,
        };
        me.diag = (0..data.p()).map(|k| me.cov(k, k)).collect();
        me
    }

    /// Covariance of (X̄₁ − X̄₂) at (i, j), up to the common factor n.
    fn cov(&self, i: usize, j: usize) -> f64 {
        let a: f64 = self.c1.row(i).dot(&self.c1.row(j));
        let b: f64 = self.c2.row(i).dot(&self.c2.row(j));
        self.w1 * a + self.w2 * b
    }

    /// ρ̂²_ij with the leading small-sample bias (1 − ρ̂²)²/dof removed.
    fn rho_sq_adjusted(&self, i: usize, j: usize) -> f64 {
        let denom = self.diag[i] * self.diag[j];
        if !(denom > 0.0) {
            return 0.0;
        }
        let r2 = (self.cov(i, j).powi(2) / denom).min(1.0);
        r2 - (1.0 - r2).powi(2) / self.dof
    }
}

fn check_band(band: usize, p: usize) -> Result<()> {
    if band >= p.max(1) && !(p == 1 && band == 0) {
        return Err(Error::InvalidInput(format!("band {band} must be below p = {p}")));
    }
    Ok(())
}

/// Plug-in estimate of the null variance of T̃_n,
/// 2p + 2 Σ_{0<|i−j|≤band} ρ̂²_ij.
pub fn cq_null_variance_estimate(data: &TwoSampleData, band: usize) -> Result<f64> {
    check_band(band, data.p())?;
    let corr = MeanDiffCorrelation::new(data);
    let p = data.p();
    let mut off = 0.0;
    for i in 0..p {
        for j in i.saturating_sub(band)..i {
            off += corr.rho_sq_adjusted(i, j);
        }
    }
    // both triangles; the true off-diagonal sum is never negative
    Ok(2.0 * p as f64 + 4.0 * off.max(0.0))
}

/// As [`cq_null_variance_estimate`] restricted to the coordinates in `set`.
pub fn null_variance_estimate_on(data: &TwoSampleData, band: usize, set: &[usize]) -> Result<f64> {
    check_index_set(set, data.p())?;
    let corr = MeanDiffCorrelation::new(data);
    let mut sorted = set.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut off = 0.0;
    for (a, &i) in sorted.iter().enumerate() {
        for &j in &sorted[..a] {
            if i - j <= band {
                off += corr.rho_sq_adjusted(i, j);
            }
        }
    }
    Ok(2.0 * sorted.len() as f64 + 4.0 * off.max(0.0))
}

fn normal_test(method: Method, statistic: f64, variance: f64, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let z = statistic / variance.sqrt();
    Ok(TestOutcome::decide(
        method,
        statistic,
        z,
        normal_upper_quantile(alpha),
        alpha,
        Some((normal_sf(z), PValueSource::Normal)),
    ))
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::out_of_range("alpha", alpha, "(0, 1]"));
    }
    Ok(())
}

/// CQ test: reject when T̃_n / σ̂ ≥ z_α.
pub fn cq_test(data: &TwoSampleData, cs: &ComponentStats, band: usize, alpha: f64) -> Result<TestOutcome> {
    let var = cq_null_variance_estimate(data, band)?;
    normal_test(Method::Cq, cq_statistic(cs), var, alpha)
}

/// BS test standardised by the same null variance as CQ.
pub fn bs_test(data: &TwoSampleData, cs: &ComponentStats, band: usize, alpha: f64) -> Result<TestOutcome> {
    let var = cq_null_variance_estimate(data, band)?;
    normal_test(Method::Bs, bs_statistic(cs), var, alpha)
}

pub fn oracle_test(
    data: &TwoSampleData,
    cs: &ComponentStats,
    signal_set: &[usize],
    band: usize,
    alpha: f64,
) -> Result<TestOutcome> {
    let stat = oracle_statistic(cs, signal_set)?;
    let var = null_variance_estimate_on(data, band, signal_set)?;
    normal_test(Method::Oracle, stat, var, alpha)
}
