//! Normal, Gumbel and CLX extreme-value helpers.

use statrs::distribution::{ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::standard()
}

/// Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Upper tail 1 − Φ(x), accurate in the far tail.
pub fn normal_sf(x: f64) -> f64 {
    std_normal().sf(x)
}

/// Upper-α quantile z_α, i.e. Φ(z_α) = 1 − α.
pub fn normal_upper_quantile(alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return f64::INFINITY;
    }
    if alpha >= 1.0 {
        return f64::NEG_INFINITY;
    }
    -std_normal().inverse_cdf(alpha)
}

/// Upper-α quantile of the standard Gumbel law exp(−e^{−x}).
pub fn gumbel_upper_quantile(alpha: f64) -> f64 {
    -(-(1.0 - alpha).ln()).ln()
}

/// P(G > x) for a standard Gumbel variable.
pub fn gumbel_sf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 1.0;
    }
    // 1 − exp(−e^{−x}) without cancellation for large x
    -(-(-x).exp()).exp_m1()
}

/// CDF of the limiting law of the centred max-norm statistic,
/// exp(−π^{−1/2} e^{−x/2}).
pub fn clx_cdf(x: f64) -> f64 {
    (-(std::f64::consts::PI.sqrt().recip()) * (-x / 2.0).exp()).exp()
}

pub fn clx_sf(x: f64) -> f64 {
    -(-(std::f64::consts::PI.sqrt().recip()) * (-x / 2.0).exp()).exp_m1()
}

/// Upper-α quantile of [`clx_cdf`]: −2 log(−√π log(1 − α)).
pub fn clx_upper_quantile(alpha: f64) -> f64 {
    -2.0 * (-(std::f64::consts::PI.sqrt()) * (1.0 - alpha).ln()).ln()
}
