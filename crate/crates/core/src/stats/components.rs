use ndarray::{ArrayView2, Axis};

use crate::data::TwoSampleData;
use crate::error::{Error, Result};

/// Sample variances below this are treated as degenerate.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// How each coordinate of √n(X̄₁ − X̄₂) is scaled to unit variance.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Standardization {
    /// Variances known and equal to one: no scaling.
    Unit,
    /// Scale by n(σ̂₁,kk/n₁ + σ̂₂,kk/n₂) from unbiased sample variances.
    #[default]
    Estimated,
    /// Known per-coordinate values of n(σ₁,kk/n₁ + σ₂,kk/n₂).
    Known(Vec<f64>),
}

/// Per-coordinate building blocks shared by every untransformed statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentStats {
    /// Two-sample U-statistic T_nk, unbiased for (μ₁ₖ − μ₂ₖ)².
    pub t_nk: Vec<f64>,
    /// Squared mean difference (X̄₁ₖ − X̄₂ₖ)².
    pub m_nk: Vec<f64>,
    /// Variance of √n(X̄₁ₖ − X̄₂ₖ): 1 under [`Standardization::Unit`].
    pub scale: Vec<f64>,
    /// n = n₁n₂/(n₁ + n₂).
    pub n: f64,
}

impl ComponentStats {
    pub fn p(&self) -> usize {
        self.t_nk.len()
    }

    /// n·T_nk / scale_k.
    #[inline]
    pub fn std_t(&self, k: usize) -> f64 {
        self.n * self.t_nk[k] / self.scale[k]
    }

    /// n·M_nk / scale_k.
    #[inline]
    pub fn std_m(&self, k: usize) -> f64 {
        self.n * self.m_nk[k] / self.scale[k]
    }
}

/// Within-sample pair sum Σ_{i≠j} x_i x_j / (m(m − 1)) for one column.
fn pair_mean(col: impl Iterator<Item = f64>, m: f64) -> (f64, f64) {
    let (sum, sum_sq) = col.fold((0.0, 0.0), |(s, q), x| (s + x, q + x * x));
    ((sum * sum - sum_sq) / (m * (m - 1.0)), sum / m)
}

pub fn component_stats(data: &TwoSampleData, std: &Standardization) -> Result<ComponentStats> {
    let p = data.p();
    let (n1, n2) = (data.n1() as f64, data.n2() as f64);
    let n = data.n_eff();
    let x1 = data.x1();
    let x2 = data.x2();

    let mut t_nk = Vec::with_capacity(p);
    let mut m_nk = Vec::with_capacity(p);
    for k in 0..p {
        let (u1, mean1) = pair_mean(x1.column(k).iter().copied(), n1);
        let (u2, mean2) = pair_mean(x2.column(k).iter().copied(), n2);
        t_nk.push(u1 + u2 - 2.0 * mean1 * mean2);
        let d = mean1 - mean2;
        m_nk.push(d * d);
    }

    let scale = match std {
        Standardization::Unit => vec![1.0; p],
        Standardization::Known(s) => {
            if s.len() != p {
                return Err(Error::Dimension(format!(
                    "{} known scales for p = {p}",
                    s.len()
                )));
            }
            if let Some((k, &v)) = s.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::DegenerateCoordinate {
                    index: k,
                    variance: v,
                    floor: VARIANCE_FLOOR,
                });
            }
            s.clone()
        }
        Standardization::Estimated => estimated_scale(x1, x2, n)?,
    };

    Ok(ComponentStats {
        t_nk,
        m_nk,
        scale,
        n,
    })
}

fn estimated_scale(x1: ArrayView2<'_, f64>, x2: ArrayView2<'_, f64>, n: f64) -> Result<Vec<f64>> {
    let (n1, n2) = (x1.nrows() as f64, x2.nrows() as f64);
    let v1 = x1.var_axis(Axis(0), 1.0);
    let v2 = x2.var_axis(Axis(0), 1.0);
    v1.iter()
        .zip(v2.iter())
        .enumerate()
        .map(|(k, (&a, &b))| {
            let var = a / n1 + b / n2;
            if var * n < VARIANCE_FLOOR {
                Err(Error::DegenerateCoordinate {
                    index: k,
                    variance: var * n,
                    floor: VARIANCE_FLOOR,
                })
            } else {
                Ok(var * n)
            }
        })
        .collect()
}
