//! Naive reimplementations used as oracles. Everything here is written
//! from the defining sums with plain loops and shares no code with the
//! library beyond the input container.

#![allow(dead_code)]

use hdtest::TwoSampleData;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random small instance: n₁, n₂ ∈ [lo_n, 5], p ∈ [2, 4], with a random
/// mean shift so that thresholds are crossed at varied levels.
pub fn small_instance(r: &mut ChaCha8Rng, lo_n: usize) -> TwoSampleData {
    let n1 = r.random_range(lo_n..=5);
    let n2 = r.random_range(lo_n..=5);
    let p = r.random_range(2..=4);
    let shift: Vec<f64> = (0..p).map(|_| r.random_range(-1.5..1.5)).collect();
    let x1 = Array2::from_shape_fn((n1, p), |_| r.sample::<f64, _>(StandardNormal));
    let x2 = Array2::from_shape_fn((n2, p), |(_, k)| r.sample::<f64, _>(StandardNormal) * 1.3 + shift[k]);
    TwoSampleData::new(x1, x2).unwrap()
}

fn col(x: ndarray::ArrayView2<'_, f64>, k: usize) -> Vec<f64> {
    (0..x.nrows()).map(|i| x[[i, k]]).collect()
}

/// T_nk by enumerating index pairs.
pub fn t_nk(d: &TwoSampleData, k: usize) -> f64 {
    let a = col(d.x1(), k);
    let b = col(d.x2(), k);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut s1 = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            if i != j {
                s1 += a[i] * a[j];
            }
        }
    }
    let mut s2 = 0.0;
    for i in 0..b.len() {
        for j in 0..b.len() {
            if i != j {
                s2 += b[i] * b[j];
            }
        }
    }
    let mut s12 = 0.0;
    for x in &a {
        for y in &b {
            s12 += x * y;
        }
    }
    s1 / (n1 * (n1 - 1.0)) + s2 / (n2 * (n2 - 1.0)) - 2.0 * s12 / (n1 * n2)
}

pub fn m_nk(d: &TwoSampleData, k: usize) -> f64 {
    let a = col(d.x1(), k);
    let b = col(d.x2(), k);
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    (ma - mb).powi(2)
}

fn unbiased_var(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub fn n_eff(d: &TwoSampleData) -> f64 {
    let (n1, n2) = (d.n1() as f64, d.n2() as f64);
    n1 * n2 / (n1 + n2)
}

/// n(σ̂₁kk/n₁ + σ̂₂kk/n₂).
pub fn scale(d: &TwoSampleData, k: usize) -> f64 {
    let (n1, n2) = (d.n1() as f64, d.n2() as f64);
    n_eff(d) * (unbiased_var(&col(d.x1(), k)) / n1 + unbiased_var(&col(d.x2(), k)) / n2)
}

pub fn cq(d: &TwoSampleData) -> f64 {
    (0..d.p()).map(|k| n_eff(d) * t_nk(d, k) / scale(d, k)).sum()
}

pub fn bs(d: &TwoSampleData) -> f64 {
    (0..d.p()).map(|k| n_eff(d) * m_nk(d, k) / scale(d, k)).sum::<f64>() - d.p() as f64
}

pub fn oracle(d: &TwoSampleData, set: &[usize]) -> f64 {
    set.iter().map(|&k| n_eff(d) * t_nk(d, k) / scale(d, k)).sum()
}

pub fn lambda(s: f64, p: usize) -> f64 {
    2.0 * s * (p as f64).ln()
}

/// L₁(s) = Σ n T_nk 1{n T_nk + 1 > λ}.
pub fn l1(d: &TwoSampleData, s: f64) -> f64 {
    let mut out = 0.0;
    for k in 0..d.p() {
        let t = n_eff(d) * t_nk(d, k) / scale(d, k);
        if t + 1.0 > lambda(s, d.p()) {
            out += t;
        }
    }
    out
}

/// L₂(s) = Σ (n M_nk − 1) 1{n M_nk > λ}.
pub fn l2(d: &TwoSampleData, s: f64) -> f64 {
    let mut out = 0.0;
    for k in 0..d.p() {
        let m = n_eff(d) * m_nk(d, k) / scale(d, k);
        if m > lambda(s, d.p()) {
            out += m - 1.0;
        }
    }
    out
}

fn normal_sf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / 2f64.sqrt())
}

/// (μ₀, σ₀) of the thresholding statistic under the null.
pub fn null_moments(s: f64, p: usize) -> (f64, f64) {
    let l = lambda(s, p);
    let pf = p as f64;
    let c = 2.0 / (2.0 * PI).sqrt() * pf.powf(1.0 - s);
    let mu = c * l.sqrt();
    let var = c * (l.powf(1.5) + l.sqrt()) + 4.0 * pf * normal_sf(l.sqrt());
    (mu, var.sqrt())
}

/// Multi-level maximum from exceedance values e and summands v: for every
/// level s_k = e_k/(2 log p) in (lo, hi), L(s_k⁻) = Σ_j v_j 1{e_j ≥ e_k}.
pub fn multi_level(e: &[f64], v: &[f64], lo: f64, hi: f64) -> f64 {
    let p = e.len();
    let two_log_p = 2.0 * (p as f64).ln();
    let mut best = f64::NEG_INFINITY;
    for k in 0..p {
        let s = e[k] / two_log_p;
        if !(s > lo && s < hi) {
            continue;
        }
        let mut l = 0.0;
        for j in 0..p {
            if e[j] >= e[k] {
                l += v[j];
            }
        }
        let (mu, sd) = null_moments(s, p);
        best = best.max((l - mu) / sd);
    }
    best
}

/// All pseudo-observations Y_kl = X₁ₖ − √(n₁/n₂) X₂ₗ.
pub fn pairs(d: &TwoSampleData) -> Vec<Vec<f64>> {
    let c = (d.n1() as f64 / d.n2() as f64).sqrt();
    let mut out = Vec::new();
    for k in 0..d.n1() {
        for l in 0..d.n2() {
            out.push((0..d.p()).map(|j| d.x1()[[k, j]] - c * d.x2()[[l, j]]).collect());
        }
    }
    out
}

/// Ω̂_τ by least squares on the enumerated pairs (dense nalgebra solves).
pub fn precision(d: &TwoSampleData, tau: usize) -> DMatrix<f64> {
    let y = pairs(d);
    let p = d.p();
    let m = y.len();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut dd = vec![0.0; p];
    for j in 0..p {
        let lo = j.saturating_sub(tau);
        let q = j - lo;
        let target = DVector::from_iterator(m, y.iter().map(|r| r[j]));
        if q == 0 {
            dd[j] = target.norm_squared() / m as f64;
            continue;
        }
        let w = DMatrix::from_fn(m, q, |i, c| y[i][lo + c]);
        let coef = (w.transpose() * &w).lu().solve(&(w.transpose() * &target)).expect("invertible");
        let resid = &target - &w * &coef;
        dd[j] = resid.norm_squared() / m as f64;
        for c in 0..q {
            a[(j, lo + c)] = coef[c];
        }
    }
    let i_a = DMatrix::<f64>::identity(p, p) - a;
    let dinv = DMatrix::from_diagonal(&DVector::from_iterator(p, dd.iter().map(|v| 1.0 / v)));
    let kappa = d.n1() as f64 / (d.n1() + d.n2()) as f64;
    i_a.transpose() * dinv * i_a / (1.0 - kappa)
}

/// n(Ẑ̄₁ᵏ − Ẑ̄₂ᵏ)²/ω_kk with Ẑ = Ω X applied to every row.
pub fn transformed_squares(d: &TwoSampleData, omega: &DMatrix<f64>, diag: &[f64]) -> Vec<f64> {
    let p = d.p();
    let row_t = |x: ndarray::ArrayView2<'_, f64>, i: usize| -> DVector<f64> {
        let v = DVector::from_iterator(p, (0..p).map(|k| x[[i, k]]));
        omega * v
    };
    let mut z1 = DVector::zeros(p);
    for i in 0..d.n1() {
        z1 += row_t(d.x1(), i);
    }
    z1 /= d.n1() as f64;
    let mut z2 = DVector::zeros(p);
    for i in 0..d.n2() {
        z2 += row_t(d.x2(), i);
    }
    z2 /= d.n2() as f64;
    (0..p).map(|k| n_eff(d) * (z1[k] - z2[k]).powi(2) / diag[k]).collect()
}

/// J(s) = Σ (q_k − 1) 1{q_k > λ}.
pub fn j_stat(q: &[f64], s: f64) -> f64 {
    let l = lambda(s, q.len());
    q.iter().filter(|&&v| v > l).map(|v| v - 1.0).sum()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// AR(1) covariance ρ^{|i−j|}.
pub fn ar1(p: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| rho.powi((i as i32 - j as i32).abs()))
}

/// Tridiagonal inverse of the AR(1) covariance.
pub fn ar1_precision(p: usize, rho: f64) -> Array2<f64> {
    let c = 1.0 / (1.0 - rho * rho);
    Array2::from_shape_fn((p, p), |(i, j)| {
        if i == j {
            if i == 0 || i == p - 1 {
                c
            } else {
                c * (1.0 + rho * rho)
            }
        } else if i.abs_diff(j) == 1 {
            -rho * c
        } else {
            0.0
        }
    })
}

/// One row of the brute-force equivalence suite.
pub struct SuiteResult {
    pub name: &'static str,
    pub instances: usize,
    pub mismatches: usize,
    pub max_rel_err: f64,
}

struct Tally {
    name: &'static str,
    instances: usize,
    mismatches: usize,
    max_rel_err: f64,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            instances: 0,
            mismatches: 0,
            max_rel_err: 0.0,
        }
    }

    fn check(&mut self, got: f64, want: f64, tol: f64) {
        if !close(got, want, tol) {
            self.mismatches += 1;
        }
        if got != want {
            let rel = (got - want).abs() / (1.0 + got.abs().max(want.abs()));
            if rel.is_finite() {
                self.max_rel_err = self.max_rel_err.max(rel);
            } else {
                self.max_rel_err = f64::INFINITY;
            }
        }
    }

    fn done(self) -> SuiteResult {
        SuiteResult {
            name: self.name,
            instances: self.instances,
            mismatches: self.mismatches,
            max_rel_err: self.max_rel_err,
        }
    }
}

/// Library statistics against the naive oracles on `instances` random
/// problems per statistic (n₁, n₂ ≤ 5, p ≤ 4).
pub fn brute_force_suite(instances: usize, seed: u64, tol: f64) -> Vec<SuiteResult> {
    use hdtest::precision::fit_banded_cholesky;
    use hdtest::stats::{
        bs_statistic, component_stats, cq_statistic, multi_threshold_statistic, oracle_statistic, threshold_statistic,
        Standardization, ThresholdConfig, Variant,
    };
    use hdtest::transform::{transform_with_truth, transformed_multi_threshold, transformed_threshold_statistic, TransformedMeans};

    let mut r = rng(seed);
    let names = [
        "T_nk", "CQ", "BS", "Oracle", "L1(s)", "L2(s)", "M_L1", "M_L2", "J_n(s) known Omega", "J_hat(s)",
        "Omega_hat entries", "M_J_hat",
    ];
    let mut t: Vec<Tally> = names.iter().map(|n| Tally::new(n)).collect();

    for _ in 0..instances {
        let d = small_instance(&mut r, 2);
        let p = d.p();
        let cs = component_stats(&d, &Standardization::Estimated).unwrap();

        t[0].instances += 1;
        for k in 0..p {
            t[0].check(cs.t_nk[k], t_nk(&d, k), tol);
        }
        t[1].instances += 1;
        t[1].check(cq_statistic(&cs), cq(&d), tol);
        t[2].instances += 1;
        t[2].check(bs_statistic(&cs), bs(&d), tol);

        let set: Vec<usize> = (0..p).filter(|_| r.random_bool(0.5)).collect();
        let set = if set.is_empty() { vec![p - 1] } else { set };
        t[3].instances += 1;
        t[3].check(oracle_statistic(&cs, &set).unwrap(), oracle(&d, &set), tol);

        let s = r.random_range(0.02..0.98);
        t[4].instances += 1;
        t[4].check(threshold_statistic(&cs, &ThresholdConfig::new(s, Variant::L1)).unwrap(), l1(&d, s), tol);
        t[5].instances += 1;
        t[5].check(threshold_statistic(&cs, &ThresholdConfig::new(s, Variant::L2)).unwrap(), l2(&d, s), tol);

        let eta = 0.05;
        let tt: Vec<f64> = (0..p).map(|k| n_eff(&d) * t_nk(&d, k) / scale(&d, k)).collect();
        let mm: Vec<f64> = (0..p).map(|k| n_eff(&d) * m_nk(&d, k) / scale(&d, k)).collect();
        let e1: Vec<f64> = tt.iter().map(|v| v + 1.0).collect();
        let v2: Vec<f64> = mm.iter().map(|v| v - 1.0).collect();
        t[6].instances += 1;
        t[6].check(
            multi_threshold_statistic(&cs, eta, Variant::L1).unwrap().value,
            multi_level(&e1, &tt, 0.0, 1.0 - eta),
            tol,
        );
        t[7].instances += 1;
        t[7].check(
            multi_threshold_statistic(&cs, eta, Variant::L2).unwrap().value,
            multi_level(&mm, &v2, 0.0, 1.0 - eta),
            tol,
        );

        // Known Ω(τ) and exact ϖ_kk(τ) from an AR(1) truth.
        let rho = r.random_range(0.1..0.8);
        let tau = r.random_range(0..p);
        let sigma = ar1(p, rho);
        let omega = ar1_precision(p, rho);
        let td = transform_with_truth(&d, omega.view(), Some(tau), sigma.view()).unwrap();
        let tm = td.means().unwrap();
        let band = DMatrix::from_fn(p, p, |i, j| if i.abs_diff(j) <= tau { omega[[i, j]] } else { 0.0 });
        let v = DMatrix::from_fn(p, p, |i, j| sigma[[i, j]]);
        let varpi = &band * v * &band;
        let diag: Vec<f64> = (0..p).map(|k| varpi[(k, k)]).collect();
        let q = transformed_squares(&d, &band, &diag);
        t[8].instances += 1;
        t[8].check(transformed_threshold_statistic(&tm, s).unwrap(), j_stat(&q, s), tol);

        // Estimated Ω̂_τ on instances with at least three rows per sample.
        let d = small_instance(&mut r, 3);
        let p = d.p();
        let tau = r.random_range(0..p.min(3));
        let est = fit_banded_cholesky(&d, tau).unwrap();
        let dense = precision(&d, tau);
        t[10].instances += 1;
        for i in 0..p {
            for j in 0..p {
                t[10].check(est.omega_hat[[i, j]], dense[(i, j)], tol);
            }
        }
        let diag: Vec<f64> = (0..p).map(|k| dense[(k, k)]).collect();
        let q = transformed_squares(&d, &dense, &diag);
        let tm = TransformedMeans::from_estimate(&d, &est).unwrap();
        let s = r.random_range(0.02..0.98);
        t[9].instances += 1;
        t[9].check(transformed_threshold_statistic(&tm, s).unwrap(), j_stat(&q, s), tol);
        let (theta, eta_star) = (0.9, 0.05);
        let qm1: Vec<f64> = q.iter().map(|v| v - 1.0).collect();
        t[11].instances += 1;
        t[11].check(
            transformed_multi_threshold(&tm, theta, eta_star).unwrap().value,
            multi_level(&q, &qm1, 1.0 - theta, 1.0 - eta_star),
            tol,
        );
    }
    t.into_iter().map(Tally::done).collect()
}
