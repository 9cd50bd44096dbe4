//! Population signal-to-noise ratios of the sum and thresholding tests.
//!
//! These are analysis tools evaluated from known δ = μ₁ − μ₂ and the
//! correlation ρ_kl of √n(X̄₁ − X̄₂); they do not touch data.

use ndarray::Array2;

use super::threshold::null_moments;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationModel {
    Identity(usize),
    /// ρ_kl = ρ^{|k−l|}.
    Ar1 { p: usize, rho: f64 },
    Dense(Array2<f64>),
}

impl CorrelationModel {
    pub fn p(&self) -> usize {
        match self {
            CorrelationModel::Identity(p) => *p,
            CorrelationModel::Ar1 { p, .. } => *p,
            CorrelationModel::Dense(m) => m.nrows(),
        }
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        match self {
            CorrelationModel::Identity(_) => (k == l) as u8 as f64,
            CorrelationModel::Ar1 { rho, .. } => rho.powi(k.abs_diff(l) as i32),
            CorrelationModel::Dense(m) => m[[k, l]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrKind {
    Cq,
    Oracle,
    /// Single-level thresholding at level s; the slowly varying term is the
    /// null variance of L_n(s).
    Thresh { s: f64 },
}

/// σ²_{T̃,0} = 2p + 2 Σ_{i≠j} ρ²_ij.
pub fn cq_null_variance(corr: &CorrelationModel) -> f64 {
    let p = corr.p();
    let mut off = 0.0;
    for i in 0..p {
        for j in 0..i {
            off += corr.get(i, j).powi(2);
        }
    }
    2.0 * p as f64 + 4.0 * off
}

fn off_diag_sq(corr: &CorrelationModel, set: &[usize]) -> f64 {
    let mut off = 0.0;
    for (a, &i) in set.iter().enumerate() {
        for &j in &set[..a] {
            off += corr.get(i, j).powi(2);
        }
    }
    2.0 * off
}

pub fn snr_analysis(deltas: &[f64], corr: &CorrelationModel, kind: SnrKind, n: f64) -> Result<f64> {
    let p = deltas.len();
    if corr.p() != p {
        return Err(Error::Dimension(format!("{} deltas for a {}-dimensional correlation", p, corr.p())));
    }
    let support: Vec<usize> = (0..p).filter(|&k| deltas[k] != 0.0).collect();
    let signal: f64 = support.iter().map(|&k| n * deltas[k] * deltas[k]).sum();
    if support.is_empty() {
        return Ok(0.0);
    }
    let mut cross = 0.0;
    for &k in &support {
        for &l in &support {
            cross += deltas[k] * deltas[l] * corr.get(k, l);
        }
    }
    let alt = 4.0 * n * cross;
    let s_len = support.len() as f64;
    let var = match kind {
        SnrKind::Cq => cq_null_variance(corr) + alt,
        SnrKind::Oracle => 2.0 * s_len + off_diag_sq(corr, &support) + alt,
        SnrKind::Thresh { s } => {
            let nm = null_moments(s, p)?;
            nm.sigma0 * nm.sigma0 + 2.0 * s_len + off_diag_sq(corr, &support) + alt
        }
    };
    Ok(signal / var.sqrt())
}
