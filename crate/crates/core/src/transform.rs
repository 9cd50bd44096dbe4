//! Precision-transformed thresholding tests and max-norm comparisons.
//!
//! Data are mapped to Z = Ω X (Ω symmetric, so Z = X Ω row-wise) and each
//! transformed mean difference is standardized by ϖ_kk, the variance of
//! √n(Z̄₁ᵏ − Z̄₂ᵏ). For an estimated Ω̂ this is its diagonal ω̂_kk.

use ndarray::{Array1, Array2, ArrayView2};

use crate::bootstrap::BootstrapNull;
use crate::data::TwoSampleData;
use crate::dist::{clx_sf, clx_upper_quantile};
use crate::error::{Error, Result};
use crate::precision::{band_matrix, PrecisionEstimate};
use crate::stats::components::{ComponentStats, VARIANCE_FLOOR};
use crate::stats::gumbel::{gumbel_critical, gumbel_pvalue};
use crate::stats::sum::check_alpha;
use crate::stats::threshold::{Exceedances, MultiLevel};
use crate::stats::{Method, PValueSource, TestOutcome};

/// Default η* for the transformed window (1 − θ, 1 − η*).
pub const DEFAULT_ETA_STAR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedData {
    pub z1: Array2<f64>,
    pub z2: Array2<f64>,
    pub omega_diag: Vec<f64>,
    pub tau: Option<usize>,
}

/// Transformed mean difference Ω(X̄₁ − X̄₂) with its standardizing
/// variances. All transformed statistics depend on the data only
/// through this.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMeans {
    pub diff: Vec<f64>,
    pub omega_diag: Vec<f64>,
    pub n: f64,
}

fn check_square(omega: ArrayView2<'_, f64>, p: usize) -> Result<()> {
    if omega.dim() != (p, p) {
        return Err(Error::Dimension(format!("omega is {:?}, expected {p}x{p}", omega.dim())));
    }
    Ok(())
}

fn banded_or_owned(omega: ArrayView2<'_, f64>, tau: Option<usize>) -> Result<Array2<f64>> {
    match tau {
        Some(t) if t + 1 < omega.nrows() => Ok(band_matrix(omega, t)?.matrix),
        _ => Ok(omega.to_owned()),
    }
}

fn check_diag(d: &[f64]) -> Result<()> {
    if let Some((k, &v)) = d.iter().enumerate().find(|(_, v)| !(**v >= VARIANCE_FLOOR)) {
        return Err(Error::DegenerateCoordinate {
            index: k,
            variance: v,
            floor: VARIANCE_FLOOR,
        });
    }
    Ok(())
}

/// Z = X Ω(τ) with ϖ̂_kk taken from the diagonal of Ω(τ).
pub fn transform(data: &TwoSampleData, omega: ArrayView2<'_, f64>, tau: Option<usize>) -> Result<TransformedData> {
    check_square(omega, data.p())?;
    let om = banded_or_owned(omega, tau)?;
    let z1 = data.x1().dot(&om);
    let z2 = data.x2().dot(&om);
    if z1.iter().chain(z2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transformed data"));
    }
    Ok(TransformedData {
        z1,
        z2,
        omega_diag: om.diag().to_vec(),
        tau,
    })
}

/// Like [`transform`], with ϖ_kk(τ) = {Ω(τ) V Ω(τ)}_kk computed exactly from
/// V = Var{√n(X̄₁ − X̄₂)} = (1 − κ)Σ₁ + κΣ₂.
pub fn transform_with_truth(
    data: &TwoSampleData,
    omega: ArrayView2<'_, f64>,
    tau: Option<usize>,
    mean_diff_cov: ArrayView2<'_, f64>,
) -> Result<TransformedData> {
    check_square(mean_diff_cov, data.p())?;
    let mut td = transform(data, omega, tau)?;
    let om = banded_or_owned(omega, tau)?;
    let ov = om.dot(&mean_diff_cov);
    td.omega_diag = (0..data.p()).map(|k| ov.row(k).dot(&om.column(k))).collect();
    Ok(td)
}

impl TransformedData {
    pub fn p(&self) -> usize {
        self.omega_diag.len()
    }

    pub fn means(&self) -> Result<TransformedMeans> {
        let (n1, n2) = (self.z1.nrows() as f64, self.z2.nrows() as f64);
        let m1 = self.z1.sum_axis(ndarray::Axis(0)) / n1;
        let m2 = self.z2.sum_axis(ndarray::Axis(0)) / n2;
        TransformedMeans::new((m1 - m2).to_vec(), self.omega_diag.clone(), n1 * n2 / (n1 + n2))
    }
}

impl TransformedMeans {
    pub fn new(diff: Vec<f64>, omega_diag: Vec<f64>, n: f64) -> Result<Self> {
        if diff.len() != omega_diag.len() {
            return Err(Error::Dimension(format!("{} means vs {} variances", diff.len(), omega_diag.len())));
        }
        check_diag(&omega_diag)?;
        Ok(TransformedMeans { diff, omega_diag, n })
    }

    /// Ω̂(X̄₁ − X̄₂) using the band structure of the estimate.
    pub fn from_estimate(data: &TwoSampleData, est: &PrecisionEstimate) -> Result<Self> {
        let d: Array1<f64> = data.mean1() - data.mean2();
        let p = d.len();
        let om = &est.omega_hat;
        let tau = est.tau;
        let diff = (0..p)
            .map(|k| {
                let lo = k.saturating_sub(tau);
                let hi = (k + tau + 1).min(p);
                (lo..hi).map(|l| om[[k, l]] * d[l]).sum()
            })
            .collect();
        TransformedMeans::new(diff, est.omega_diag(), data.n_eff())
    }

    pub fn p(&self) -> usize {
        self.diff.len()
    }

    /// n(Z̄₁ᵏ − Z̄₂ᵏ)²/ϖ_kk.
    pub fn standardized_squares(&self) -> Vec<f64> {
        self.diff
            .iter()
            .zip(&self.omega_diag)
            .map(|(d, w)| self.n * d * d / w)
            .collect()
    }

    pub fn exceedances(&self) -> Exceedances {
        Exceedances::squared_form(self.standardized_squares())
    }
}

fn check_level(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::out_of_range("s", s, "(0, 1)"));
    }
    Ok(())
}

fn check_window(theta: f64, eta_star: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::out_of_range("theta", theta, "(0, 1)"));
    }
    if !(eta_star > 0.0 && eta_star < theta) {
        return Err(Error::out_of_range("eta_star", eta_star, "(0, theta)"));
    }
    Ok(())
}

/// θ from p = n^{1/θ}, i.e. log n / log p, clamped to [0.1, 0.9].
pub fn default_theta(n: f64, p: usize) -> f64 {
    if p < 2 {
        return 0.5;
    }
    (n.ln() / (p as f64).ln()).clamp(0.1, 0.9)
}

/// Single-level transformed statistic Ĵ_n(s, τ).
pub fn transformed_threshold_statistic(tm: &TransformedMeans, s: f64) -> Result<f64> {
    check_level(s)?;
    Ok(tm.exceedances().statistic(s))
}

/// max of (Ĵ_n(s) − μ₀(s))/σ₀(s) over the data-driven levels inside
/// (1 − θ, 1 − η*).
pub fn transformed_multi_threshold(tm: &TransformedMeans, theta: f64, eta_star: f64) -> Result<MultiLevel> {
    check_window(theta, eta_star)?;
    Ok(tm.exceedances().multi_level(1.0 - theta, 1.0 - eta_star))
}

/// Where a multi-level test takes its null distribution from.
#[derive(Debug, Clone, Copy)]
pub enum CriticalSource<'a> {
    Gumbel,
    Bootstrap(&'a BootstrapNull),
}

/// Decision for a multi-level statistic. The Gumbel limit uses
/// b(log p, `eta_b`).
pub fn calibrate_multi(
    method: Method,
    value: f64,
    p: usize,
    eta_b: f64,
    alpha: f64,
    source: CriticalSource<'_>,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    match source {
        CriticalSource::Gumbel => Ok(TestOutcome::decide(
            method,
            value,
            value,
            gumbel_critical(alpha, p, eta_b)?,
            alpha,
            Some((gumbel_pvalue(value, p, eta_b)?, PValueSource::Gumbel)),
        )),
        CriticalSource::Bootstrap(bn) => bn.outcome(method, value, alpha),
    }
}

pub fn transformed_test(
    tm: &TransformedMeans,
    theta: f64,
    eta_star: f64,
    alpha: f64,
    source: CriticalSource<'_>,
) -> Result<TestOutcome> {
    let ml = transformed_multi_threshold(tm, theta, eta_star)?;
    calibrate_multi(Method::TransformedMulti, ml.value, tm.p(), theta - eta_star, alpha, source)
}

/// Max-norm statistics G(I) = max_k n(X̄₁ᵏ − X̄₂ᵏ)²/scale_k and, when
/// transformed means are supplied, G(Ω̂) = max_k n(Ẑ̄₁ᵏ − Ẑ̄₂ᵏ)²/ω̂_kk.
pub fn clx_statistics(cs: &ComponentStats, transformed: Option<&TransformedMeans>) -> (f64, Option<f64>) {
    let g_identity = (0..cs.p()).map(|k| cs.std_m(k)).fold(f64::NEG_INFINITY, f64::max);
    let g_omega = transformed.map(|tm| tm.standardized_squares().into_iter().fold(f64::NEG_INFINITY, f64::max));
    (g_identity, g_omega)
}

fn clx_center(g: f64, p: usize) -> Result<f64> {
    if p <= 2 {
        return Err(Error::InvalidInput(format!("max-norm calibration needs p >= 3 (got {p})")));
    }
    let lp = (p as f64).ln();
    Ok(g - 2.0 * lp + lp.ln())
}

/// Critical value for G − 2 log p + log log p.
pub fn clx_critical(alpha: f64, p: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if p <= 2 {
        return Err(Error::InvalidInput(format!("max-norm calibration needs p >= 3 (got {p})")));
    }
    Ok(clx_upper_quantile(alpha))
}

pub fn clx_pvalue(g: f64, p: usize) -> Result<f64> {
    Ok(clx_sf(clx_center(g, p)?))
}

pub fn clx_test(method: Method, g: f64, p: usize, alpha: f64) -> Result<TestOutcome> {
    let x = clx_center(g, p)?;
    Ok(TestOutcome::decide(
        method,
        g,
        x,
        clx_critical(alpha, p)?,
        alpha,
        Some((clx_sf(x), PValueSource::ExtremeValue)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{component_stats, Standardization, Variant};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy() -> TwoSampleData {
        TwoSampleData::new(
            array![[1.0, 0.5, -1.0], [2.0, -0.5, 0.0], [0.0, 1.5, 1.0], [1.5, 0.0, 0.5]],
            array![[0.0, 0.0, 1.0], [-1.0, 1.0, 2.0], [0.5, -1.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn identity_is_noop() {
        let d = toy();
        let td = transform(&d, Array2::eye(3).view(), None).unwrap();
        assert_eq!(td.z1, d.x1().to_owned());
        assert_eq!(td.omega_diag, vec![1.0; 3]);
    }

    #[test]
    fn diagonal_omega_cancels_in_standardized_squares() {
        let d = toy();
        let om = Array2::from_diag(&array![2.0, 0.5, 3.0]);
        let td = transform_with_truth(&d, om.view(), Some(0), Array2::eye(3).view()).unwrap();
        for k in 0..3 {
            assert_eq!(td.z1[[1, k]], om[[k, k]] * d.x1()[[1, k]]);
        }
        let q = td.means().unwrap().standardized_squares();
        let cs = component_stats(&d, &Standardization::Unit).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(q[k], cs.std_m(k), epsilon = 1e-12);
        }
    }

    #[test]
    fn two_by_two_product() {
        // Ω = [[1.5625, -0.9375], [-0.9375, 1.5625]] is the AR(1) ρ = 0.6 inverse
        let om = array![[1.5625, -0.9375], [-0.9375, 1.5625]];
        let d = TwoSampleData::new(array![[1.0, 2.0], [3.0, 0.0]], array![[0.0, 1.0], [1.0, 1.0]]).unwrap();
        let td = transform(&d, om.view(), None).unwrap();
        assert_abs_diff_eq!(td.z1[[0, 0]], 1.5625 - 1.875, epsilon = 1e-14);
        assert_abs_diff_eq!(td.z1[[0, 1]], -0.9375 + 3.125, epsilon = 1e-14);
        assert_abs_diff_eq!(td.z1[[1, 1]], -2.8125, epsilon = 1e-14);
    }

    #[test]
    fn identity_reduces_to_l2() {
        let d = toy();
        let cs = component_stats(&d, &Standardization::Unit).unwrap();
        let tm = transform(&d, Array2::eye(3).view(), Some(2)).unwrap().means().unwrap();
        let a = Exceedances::from_components(&cs, Variant::L2);
        for s in [0.05, 0.2, 0.5, 0.9] {
            assert_abs_diff_eq!(transformed_threshold_statistic(&tm, s).unwrap(), a.statistic(s), epsilon = 1e-10);
        }
    }

    #[test]
    fn one_exceedance() {
        let tm = TransformedMeans::new(vec![0.0, 1.0, 0.0], vec![1.0, 2.0, 1.0], 10.0).unwrap();
        // q = 10·1/2 = 5 > 2·0.3·log 3
        assert_abs_diff_eq!(transformed_threshold_statistic(&tm, 0.3).unwrap(), 4.0, epsilon = 1e-14);
        let none = TransformedMeans::new(vec![0.0; 3], vec![1.0; 3], 10.0).unwrap();
        assert_eq!(transformed_threshold_statistic(&none, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn window_checks_and_bounds() {
        let tm = TransformedMeans::new(vec![0.3, 1.0, -0.2, 0.8], vec![1.0; 4], 8.0).unwrap();
        assert!(transformed_multi_threshold(&tm, 0.5, 0.6).is_err());
        assert!(transformed_multi_threshold(&tm, 1.0, 0.05).is_err());
        let ml = transformed_multi_threshold(&tm, 0.6, 0.05).unwrap();
        if let Some(s) = ml.argmax_s {
            assert!(s > 0.4 && s < 0.95);
        }
        let empty = TransformedMeans::new(vec![0.0; 4], vec![1.0; 4], 8.0).unwrap();
        let ml = transformed_multi_threshold(&empty, 0.6, 0.05).unwrap();
        assert!(!ml.has_exceedance());
        assert_eq!(ml.value, f64::NEG_INFINITY);
    }

    #[test]
    fn transformed_gumbel_critical_closed_form() {
        let (alpha, p, theta, eta_star) = (0.05f64, 200usize, 0.5, 0.05);
        let y = (p as f64).ln();
        let a = (2.0 * y.ln()).sqrt();
        let b = 2.0 * y.ln() + 0.5 * y.ln().ln() - 0.5 * (4.0 * std::f64::consts::PI / (1.0f64 - 0.45).powi(2)).ln();
        let q = -(-(1.0 - alpha).ln()).ln();
        let tm = TransformedMeans::new(vec![0.0; p], vec![1.0; p], 10.0).unwrap();
        let out = transformed_test(&tm, theta, eta_star, alpha, CriticalSource::Gumbel).unwrap();
        assert_abs_diff_eq!(out.critical_value, (q + b) / a, epsilon = 1e-12);
        assert!(!out.reject);
    }

    #[test]
    fn clx_quantile_value() {
        let q = clx_critical(0.05, 10).unwrap();
        assert_abs_diff_eq!(q, 4.79566, epsilon = 1e-5);
        assert!(clx_critical(0.05, 2).is_err());
        let cdf = (-(std::f64::consts::PI.sqrt().recip()) * (-q / 2.0).exp()).exp();
        assert_abs_diff_eq!(cdf, 0.95, epsilon = 1e-10);
        assert!(clx_critical(0.01, 10).unwrap() > clx_critical(0.1, 10).unwrap());
    }

    #[test]
    fn clx_max_properties() {
        let d = toy();
        let cs = component_stats(&d, &Standardization::Unit).unwrap();
        let tm = transform(&d, Array2::eye(3).view(), None).unwrap().means().unwrap();
        let (gi, go) = clx_statistics(&cs, Some(&tm));
        for k in 0..3 {
            assert!(gi >= cs.std_m(k));
        }
        assert_abs_diff_eq!(gi, go.unwrap(), epsilon = 1e-12);
        let single = d.select_columns(&[1]).unwrap();
        let cs1 = component_stats(&single, &Standardization::Unit).unwrap();
        assert_eq!(clx_statistics(&cs1, None), (cs1.n * cs1.m_nk[0], None));
    }

    #[test]
    fn banded_means_match_dense_transform() {
        let d = toy();
        let est = crate::precision::fit_banded_cholesky(&d, 1).unwrap();
        let fast = TransformedMeans::from_estimate(&d, &est).unwrap();
        let slow = transform(&d, est.omega_hat.view(), Some(1)).unwrap().means().unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(fast.diff[k], slow.diff[k], epsilon = 1e-12);
        }
        assert_eq!(fast.omega_diag, slow.omega_diag);
    }

    #[test]
    fn default_theta_clamps() {
        assert_abs_diff_eq!(default_theta(10.0, 100), 0.5, epsilon = 1e-12);
        assert_eq!(default_theta(1e6, 10), 0.9);
        assert_eq!(default_theta(1.01, 1000), 0.1);
    }
}
