//! Gumbel calibration of multi-level thresholding statistics.
//!
//! Under the null, a(log p)·M − b(log p, η) is asymptotically standard
//! Gumbel with
//! a(y) = (2 log y)^{1/2} and
//! b(y, η) = 2 log y + ½ log log y − ½ log{4π/(1 − η)²}.

use std::f64::consts::PI;

use crate::dist::{gumbel_sf, gumbel_upper_quantile};
use crate::error::{Error, Result};

pub fn gumbel_a(y: f64) -> f64 {
    (2.0 * y.ln()).sqrt()
}

pub fn gumbel_b(y: f64, eta: f64) -> f64 {
    2.0 * y.ln() + 0.5 * y.ln().ln() - 0.5 * (4.0 * PI / ((1.0 - eta) * (1.0 - eta))).ln()
}

fn check(p: usize, eta: f64) -> Result<f64> {
    if p <= 2 {
        return Err(Error::InvalidInput(format!(
            "Gumbel calibration needs p >= 3 (got p = {p}); use bootstrap calibration instead"
        )));
    }
    if !(eta < 1.0) || !eta.is_finite() {
        return Err(Error::out_of_range("eta", eta, "eta < 1"));
    }
    Ok((p as f64).ln())
}

/// G_α = {q_α + b(log p, η)}/a(log p) with q_α = −log(−log(1 − α)).
pub fn gumbel_critical(alpha: f64, p: usize, eta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::out_of_range("alpha", alpha, "(0, 1]"));
    }
    let y = check(p, eta)?;
    Ok((gumbel_upper_quantile(alpha) + gumbel_b(y, eta)) / gumbel_a(y))
}

/// Asymptotic p-value P{Gumbel ≥ a(log p)·M − b(log p, η)}.
pub fn gumbel_pvalue(m: f64, p: usize, eta: f64) -> Result<f64> {
    let y = check(p, eta)?;
    if m == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    Ok(gumbel_sf(gumbel_a(y) * m - gumbel_b(y, eta)))
}
