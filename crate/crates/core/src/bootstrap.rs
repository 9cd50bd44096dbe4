//! Parametric bootstrap for the null distribution of multi-level
//! thresholding statistics.
//!
//! Σ̂₁ and Σ̂₂ come from one-sample banded Cholesky fits. Each replicate
//! draws n₁ rows from N(0, Σ̂₁) and n₂ rows from N(0, Σ̂₂) and recomputes
//! the max statistic. Replicate b uses its own RNG stream keyed by
//! (seed, b), so copies do not depend on scheduling.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::TwoSampleData;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::precision::{
    fit_banded_cholesky, one_sample_cholesky, select_band_width_two_sample, BandedRegression, DEFAULT_SPLITS,
};
use crate::rng;
use crate::stats::sum::check_alpha;
use crate::stats::threshold::multi_threshold_statistic;
use crate::stats::{component_stats, Method, PValueSource, Standardization, TestOutcome, Variant};
use crate::transform::{transformed_multi_threshold, TransformedMeans};

pub const DEFAULT_B: usize = 300;
pub const MIN_B: usize = 100;

/// Statistic recomputed in every replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BootstrapMethod {
    MultiThresh { eta: f64, variant: Variant },
    /// Ω̂ is re-estimated per replicate with the band width fixed, or
    /// re-selected when `reselect` is set.
    TransformedMulti { theta: f64, eta_star: f64, reselect: bool },
}

impl BootstrapMethod {
    pub fn method(&self) -> Method {
        match self {
            BootstrapMethod::MultiThresh { .. } => Method::MultiThresh,
            BootstrapMethod::TransformedMulti { .. } => Method::TransformedMulti,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSpec {
    pub method: BootstrapMethod,
    pub b: usize,
    /// Band width of the one-sample fits (and of Ω̂ unless re-selected).
    pub tau: usize,
    pub seed: u64,
    /// Standardization used by the original statistic.
    pub standardization: Standardization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapNull {
    copies: Vec<f64>,
    pub method: Method,
    pub seed: u64,
}

impl BootstrapNull {
    pub fn from_copies(mut copies: Vec<f64>, method: Method, seed: u64) -> Result<Self> {
        if copies.is_empty() {
            return Err(Error::InvalidInput("no bootstrap copies".into()));
        }
        if copies.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("bootstrap copy"));
        }
        copies.sort_by(|a, b| a.total_cmp(b));
        Ok(BootstrapNull { copies, method, seed })
    }

    /// Sorted ascending.
    pub fn copies(&self) -> &[f64] {
        &self.copies
    }

    pub fn b(&self) -> usize {
        self.copies.len()
    }

    /// Type-7 empirical quantile.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::out_of_range("q", q, "[0, 1]"));
        }
        let x = &self.copies;
        let h = (x.len() - 1) as f64 * q;
        let lo = h.floor() as usize;
        let f = h - lo as f64;
        if f == 0.0 || lo + 1 >= x.len() || x[lo] == x[lo + 1] {
            return Ok(x[lo]);
        }
        if x[lo] == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(x[lo] + f * (x[lo + 1] - x[lo]))
    }

    /// 1 − sup{q : quantile(q) ≤ m}, so that `pvalue(m) ≤ α` exactly when
    /// m ≥ quantile(1 − α).
    pub fn pvalue(&self, m: f64) -> f64 {
        let x = &self.copies;
        let below = x.partition_point(|v| *v <= m);
        if below == 0 {
            return 1.0;
        }
        let i = below - 1;
        if i + 1 == x.len() {
            return 0.0;
        }
        let f = if x[i] == f64::NEG_INFINITY {
            1.0
        } else {
            (m - x[i]) / (x[i + 1] - x[i])
        };
        let q = (i as f64 + f) / (x.len() - 1) as f64;
        (1.0 - q).clamp(0.0, 1.0)
    }

    pub fn outcome(&self, method: Method, value: f64, alpha: f64) -> Result<TestOutcome> {
        check_alpha(alpha)?;
        let crit = if alpha >= 1.0 {
            f64::NEG_INFINITY
        } else {
            self.quantile(1.0 - alpha)?
        };
        Ok(TestOutcome::decide(
            method,
            value,
            value,
            crit,
            alpha,
            Some((self.pvalue(value), PValueSource::Bootstrap)),
        ))
    }
}

fn draw(reg: &BandedRegression, rows: usize, rng: &mut rng::StreamRng) -> Array2<f64> {
    let p = reg.p();
    let mut out = Array2::zeros((rows, p));
    for mut row in out.rows_mut() {
        reg.sample_into(rng, row.as_slice_mut().expect("standard layout"));
    }
    out
}

fn replicate_standardization(
    orig: &Standardization,
    fits: &(BandedRegression, BandedRegression),
    data: &TwoSampleData,
) -> Standardization {
    match orig {
        Standardization::Estimated => Standardization::Estimated,
        // the bootstrap world's known variances are those of Σ̂ᵢ
        _ => {
            let (n1, n2, n) = (data.n1() as f64, data.n2() as f64, data.n_eff());
            let v1 = fits.0.covariance().diag().to_owned();
            let v2 = fits.1.covariance().diag().to_owned();
            Standardization::Known(v1.iter().zip(&v2).map(|(a, b)| n * (a / n1 + b / n2)).collect())
        }
    }
}

/// Sorted bootstrap copies of the chosen multi-level statistic.
pub fn bootstrap_null(data: &TwoSampleData, spec: &BootstrapSpec, exec: Execution) -> Result<BootstrapNull> {
    if spec.b < MIN_B {
        return Err(Error::out_of_range("b", spec.b as f64, ">= 100"));
    }
    let fits = (
        one_sample_cholesky(data.x1(), spec.tau)?,
        one_sample_cholesky(data.x2(), spec.tau)?,
    );
    for f in [&fits.0, &fits.1] {
        if f.a_matrix().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("one-sample Cholesky factor"));
        }
    }
    let std = match spec.method {
        BootstrapMethod::MultiThresh { .. } => replicate_standardization(&spec.standardization, &fits, data),
        BootstrapMethod::TransformedMulti { .. } => Standardization::Unit,
    };
    let (n1, n2) = (data.n1(), data.n2());
    let copies = exec.try_map(spec.b, |b| -> Result<f64> {
        let mut rng = rng::stream(&[spec.seed, rng::purpose::BOOTSTRAP, b as u64]);
        let x1 = draw(&fits.0, n1, &mut rng);
        let x2 = draw(&fits.1, n2, &mut rng);
        let boot = TwoSampleData::new(x1, x2)?;
        match spec.method {
            BootstrapMethod::MultiThresh { eta, variant } => {
                let cs = component_stats(&boot, &std)?;
                Ok(multi_threshold_statistic(&cs, eta, variant)?.value)
            }
            BootstrapMethod::TransformedMulti {
                theta,
                eta_star,
                reselect,
            } => {
                let tau = if reselect {
                    let seed = rng::derive_seed(&[spec.seed, rng::purpose::BAND_SELECTION, b as u64]);
                    select_band_width_two_sample(&boot, None, DEFAULT_SPLITS, seed)?.tau
                } else {
                    spec.tau
                };
                let est = fit_banded_cholesky(&boot, tau)?;
                let tm = TransformedMeans::from_estimate(&boot, &est)?;
                Ok(transformed_multi_threshold(&tm, theta, eta_star)?.value)
            }
        }
    })?;
    BootstrapNull::from_copies(copies, spec.method.method(), spec.seed)
}
