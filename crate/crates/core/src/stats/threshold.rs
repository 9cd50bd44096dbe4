//! Thresholding statistics L₁(s), L₂(s) and their multi-level maximum.

use std::f64::consts::PI;

use super::components::ComponentStats;
use super::gumbel::{gumbel_critical, gumbel_pvalue};
use super::outcome::{Method, PValueSource, TestOutcome};
use super::sum::check_alpha;
use crate::dist::{normal_sf, normal_upper_quantile};
use crate::error::{Error, Result};

/// Default upper exclusion η of the threshold window (0, 1 − η).
pub const DEFAULT_ETA: f64 = 0.05;

/// Grid points closer than this (on the s scale) are merged.
pub const GRID_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    /// Threshold the U-statistics: Σ n T̂_k 1{n T̂_k + 1 > λ}.
    L1,
    /// Threshold squared mean differences: Σ (n M̂_k − 1) 1{n M̂_k > λ}.
    #[default]
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdConfig {
    pub s: f64,
    pub eta: f64,
    pub variant: Variant,
}

impl ThresholdConfig {
    pub fn new(s: f64, variant: Variant) -> Self {
        ThresholdConfig {
            s,
            eta: DEFAULT_ETA,
            variant,
        }
    }
}

/// λ_n(s) = 2 s log p.
pub fn threshold_level(s: f64, p: usize) -> f64 {
    2.0 * s * (p as f64).ln()
}

/// Null mean and standard deviation of L_n(s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullMoments {
    pub mu0: f64,
    pub sigma0: f64,
    pub s: f64,
    pub p: usize,
}

/// μ₀ = (2/√(2π)) λ^{1/2} p^{1−s},
/// σ₀² = (2/√(2π)) (λ^{3/2} + λ^{1/2}) p^{1−s} + 4p Φ̄(λ^{1/2}), with λ = 2 s log p.
///
/// The Φ̄ term is negligible for large s but carries the whole variance
/// (2p) as s → 0, where the first term vanishes.
pub fn null_moments(s: f64, p: usize) -> Result<NullMoments> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::out_of_range("s", s, "(0, 1]"));
    }
    if p < 2 {
        return Err(Error::out_of_range("p", p as f64, "p >= 2"));
    }
    let lambda = threshold_level(s, p);
    let c = 2.0 / (2.0 * PI).sqrt() * (p as f64).powf(1.0 - s);
    let root = lambda.sqrt();
    Ok(NullMoments {
        mu0: c * root,
        sigma0: (c * (lambda * root + root) + 4.0 * p as f64 * normal_sf(root)).sqrt(),
        s,
        p,
    })
}

/// Per-coordinate exceedance values `e_k` (compared against λ_n(s)) and
/// summands `v_k` (added when the coordinate is retained).
///
/// All thresholding statistics in the crate, transformed or not, are
/// `L(s) = Σ_k v_k 1{e_k > λ_n(s)}` for some choice of (e, v).
#[derive(Debug, Clone, PartialEq)]
pub struct Exceedances {
    exceed: Vec<f64>,
    summand: Vec<f64>,
    p: usize,
}

/// Value of a multi-level statistic and the level where it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiLevel {
    /// Maximum standardised statistic; `-inf` when the grid is empty.
    pub value: f64,
    pub argmax_s: Option<f64>,
    pub grid_len: usize,
}

impl MultiLevel {
    pub fn no_exceedance() -> Self {
        MultiLevel {
            value: f64::NEG_INFINITY,
            argmax_s: None,
            grid_len: 0,
        }
    }

    pub fn has_exceedance(&self) -> bool {
        self.argmax_s.is_some()
    }
}

impl Exceedances {
    pub fn new(exceed: Vec<f64>, summand: Vec<f64>) -> Self {
        assert_eq!(exceed.len(), summand.len());
        let p = exceed.len();
        Exceedances {
            exceed,
            summand,
            p,
        }
    }

    /// Exceedance values `q_k` with summands `q_k − 1` (the L₂ form).
    pub fn squared_form(q: Vec<f64>) -> Self {
        let summand = q.iter().map(|v| v - 1.0).collect();
        Exceedances::new(q, summand)
    }

    pub fn from_components(cs: &ComponentStats, variant: Variant) -> Self {
        match variant {
            Variant::L2 => Exceedances::squared_form((0..cs.p()).map(|k| cs.std_m(k)).collect()),
            Variant::L1 => {
                let v: Vec<f64> = (0..cs.p()).map(|k| cs.std_t(k)).collect();
                Exceedances::new(v.iter().map(|x| x + 1.0).collect(), v)
            }
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn exceed(&self) -> &[f64] {
        &self.exceed
    }

    /// L(s) with the strict indicator e_k > λ_n(s).
    pub fn statistic(&self, s: f64) -> f64 {
        let lambda = threshold_level(s, self.p);
        self.exceed
            .iter()
            .zip(&self.summand)
            .filter(|(e, _)| **e > lambda)
            .map(|(_, v)| v)
            .sum()
    }

    fn log_p2(&self) -> f64 {
        2.0 * (self.p as f64).ln()
    }

    /// Candidate levels e_k/(2 log p) inside the open window (lo, hi),
    /// ascending, merged within [`GRID_TOL`].
    pub fn grid(&self, lo: f64, hi: f64) -> Vec<f64> {
        let denom = self.log_p2();
        let mut s: Vec<f64> = self
            .exceed
            .iter()
            .map(|e| e / denom)
            .filter(|s| *s > lo && *s < hi)
            .collect();
        s.sort_by(|a, b| a.total_cmp(b));
        s.dedup_by(|b, a| *b - *a <= GRID_TOL);
        s
    }

    /// max over grid levels s of (L(s⁻) − μ₀(s))/σ₀(s).
    ///
    /// Between consecutive levels L is constant while μ₀ and σ₀ decrease,
    /// so the supremum over a window is approached from the left of each
    /// grid point, where the coordinate defining that point is still
    /// retained. Ties in the maximum go to the smallest level.
    pub fn multi_level(&self, lo: f64, hi: f64) -> MultiLevel {
        if self.p < 2 {
            return MultiLevel::no_exceedance();
        }
        let denom = self.log_p2();
        let mut order: Vec<usize> = (0..self.p).collect();
        order.sort_by(|&a, &b| self.exceed[b].total_cmp(&self.exceed[a]));

        let mut best = MultiLevel::no_exceedance();
        let mut cum = 0.0;
        let mut i = 0;
        while i < order.len() {
            let top = self.exceed[order[i]] / denom;
            let mut j = i;
            while j < order.len() && top - self.exceed[order[j]] / denom <= GRID_TOL {
                cum += self.summand[order[j]];
                j += 1;
            }
            let s = self.exceed[order[j - 1]] / denom;
            if s > lo && s < hi {
                best.grid_len += 1;
                let nm = null_moments(s, self.p).expect("s inside (0, 1)");
                let z = (cum - nm.mu0) / nm.sigma0;
                // descending scan: `>=` hands ties to the smaller level
                if z >= best.value {
                    best.value = z;
                    best.argmax_s = Some(s);
                }
            }
            if s <= lo {
                break;
            }
            i = j;
        }
        best
    }
}

/// L₁(s) or L₂(s) on scale-standardised components.
pub fn threshold_statistic(cs: &ComponentStats, cfg: &ThresholdConfig) -> Result<f64> {
    if !(cfg.s > 0.0 && cfg.s < 1.0) {
        return Err(Error::out_of_range("s", cfg.s, "(0, 1)"));
    }
    Ok(Exceedances::from_components(cs, cfg.variant).statistic(cfg.s))
}

/// Reject when L > z_α σ₀ + μ₀.
pub fn single_level_test(l: f64, nm: &NullMoments, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let z = (l - nm.mu0) / nm.sigma0;
    Ok(TestOutcome::decide(
        Method::SingleThresh,
        l,
        z,
        normal_upper_quantile(alpha),
        alpha,
        Some((normal_sf(z), PValueSource::Normal)),
    ))
}

/// Grid S_n = {n M̂_k/(2 log p)} ∩ (0, 1 − η) for the L₂ form.
pub fn candidate_grid(cs: &ComponentStats, eta: f64) -> Vec<f64> {
    Exceedances::from_components(cs, Variant::L2).grid(0.0, 1.0 - eta)
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::out_of_range("eta", eta, "(0, 1)"));
    }
    Ok(())
}

/// M_{L_n} over the window (0, 1 − η).
pub fn multi_threshold_statistic(cs: &ComponentStats, eta: f64, variant: Variant) -> Result<MultiLevel> {
    check_eta(eta)?;
    Ok(Exceedances::from_components(cs, variant).multi_level(0.0, 1.0 - eta))
}

/// Multi-level test with the Gumbel critical value G_α.
pub fn multi_threshold_test(cs: &ComponentStats, eta: f64, variant: Variant, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let ml = multi_threshold_statistic(cs, eta, variant)?;
    let p = cs.p();
    let crit = gumbel_critical(alpha, p, eta)?;
    Ok(TestOutcome::decide(
        Method::MultiThresh,
        ml.value,
        ml.value,
        crit,
        alpha,
        Some((gumbel_pvalue(ml.value, p, eta)?, PValueSource::Gumbel)),
    ))
}
