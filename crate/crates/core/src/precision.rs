//! Banded Cholesky estimation of Ω = {(1 − κ)Σ₁ + κΣ₂}^{-1}.
//!
//! Each coordinate j is regressed (least squares, no intercept) on its τ
//! predecessors. With regression rows `a_j` and residual variances `d_j²`,
//! Σ^{-1} = (I − A)ᵀ D^{-1} (I − A) and Σ = (I − A)^{-1} D (I − A)^{-ᵀ}.
//!
//! For the two-sample estimator the regression runs over all n₁n₂
//! pseudo-observations Y_kl = X₁ₖ − √(n₁/n₂) X₂ₗ. Their Gram matrix is a
//! combination of the two raw scatter matrices and the sample means (see
//! [`pair_gram`]), so no pair enumeration is needed.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{centered, TwoSampleData};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_distance, spd_solve, spectral_norm, SymBand};
use crate::rng;

/// Residual variances are floored here before inversion.
pub const RESIDUAL_FLOOR: f64 = 1e-10;

/// Default maximum band width considered by [`default_candidates`].
pub const MAX_DEFAULT_BAND: usize = 20;

/// Default number of random splits for band-width selection.
pub const DEFAULT_SPLITS: usize = 20;

/// Symmetric matrix with entries beyond `tau` off the diagonal zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    pub matrix: Array2<f64>,
    pub tau: usize,
}

pub fn band_matrix(m: ArrayView2<'_, f64>, tau: usize) -> Result<BandedMatrix> {
    let p = m.nrows();
    if m.ncols() != p {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", p, m.ncols())));
    }
    if tau >= p.max(1) {
        return Err(Error::InvalidInput(format!("tau {tau} out of range for p = {p}")));
    }
    let matrix = Array2::from_shape_fn((p, p), |(i, j)| if i.abs_diff(j) <= tau { m[[i, j]] } else { 0.0 });
    Ok(BandedMatrix { matrix, tau })
}

/// Modified Cholesky factors (A, D) of a banded autoregression.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedRegression {
    tau: usize,
    /// `coeffs[j]` regresses coordinate j on coordinates `j - coeffs[j].len() .. j`.
    coeffs: Vec<Vec<f64>>,
    resid_var: Vec<f64>,
    ridged: usize,
    floored: usize,
}

impl BandedRegression {
    /// Fits the regressions from `gram = Σ y yᵀ` over `count` observations.
    /// `gram.band()` must be at least `tau`.
    pub fn from_gram(gram: &SymBand, count: f64, tau: usize) -> Self {
        assert!(gram.band() >= tau, "gram band {} below tau {tau}", gram.band());
        let p = gram.dim();
        let mut coeffs = Vec::with_capacity(p);
        let mut resid_var = Vec::with_capacity(p);
        let (mut ridged, mut floored) = (0, 0);
        let mut g = Vec::with_capacity(tau * tau);
        let mut rhs = Vec::with_capacity(tau);
        for j in 0..p {
            let lo = j.saturating_sub(tau);
            let k = j - lo;
            g.clear();
            rhs.clear();
            for a in lo..j {
                for b in lo..j {
                    g.push(gram.get(a, b));
                }
                rhs.push(gram.get(a, j));
            }
            let (coef, used_ridge) = spd_solve(&g, &rhs, k);
            ridged += used_ridge as usize;
            // RSS = y'y − 2a'g + a'Ga, which is y'y − a'g at the exact solution
            let mut rss = gram.get(j, j);
            for (ai, &c) in coef.iter().enumerate() {
                rss -= 2.0 * c * rhs[ai];
                for (bi, &c2) in coef.iter().enumerate() {
                    rss += c * c2 * g[ai * k + bi];
                }
            }
            let mut d = rss / count;
            if !(d >= RESIDUAL_FLOOR) {
                d = RESIDUAL_FLOOR;
                floored += 1;
            }
            coeffs.push(coef);
            resid_var.push(d);
        }
        if ridged + floored > 0 {
            log::debug!("banded regression: {ridged} ridged rows, {floored} floored residual variances");
        }
        BandedRegression {
            tau,
            coeffs,
            resid_var,
            ridged,
            floored,
        }
    }

    pub fn p(&self) -> usize {
        self.resid_var.len()
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Residual variances d̂_j².
    pub fn resid_var(&self) -> &[f64] {
        &self.resid_var
    }

    /// Rows whose Gram needed the ridge fallback.
    pub fn ridged_rows(&self) -> usize {
        self.ridged
    }

    /// Rows whose residual variance hit [`RESIDUAL_FLOOR`].
    pub fn floored_rows(&self) -> usize {
        self.floored
    }

    /// Dense strictly lower-triangular coefficient matrix A.
    pub fn a_matrix(&self) -> Array2<f64> {
        let p = self.p();
        let mut a = Array2::zeros((p, p));
        for (j, c) in self.coeffs.iter().enumerate() {
            let lo = j - c.len();
            for (i, &v) in c.iter().enumerate() {
                a[[j, lo + i]] = v;
            }
        }
        a
    }

    /// (I − A)ᵀ D^{-1} (I − A), banded with width τ.
    pub fn inverse_covariance(&self) -> Array2<f64> {
        let p = self.p();
        let mut out = Array2::zeros((p, p));
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(self.tau + 1);
        for (k, c) in self.coeffs.iter().enumerate() {
            row.clear();
            let lo = k - c.len();
            row.extend(c.iter().enumerate().map(|(i, &v)| (lo + i, -v)));
            row.push((k, 1.0));
            let w = 1.0 / self.resid_var[k];
            for &(i, ui) in &row {
                for &(j, uj) in &row {
                    out[[i, j]] += ui * w * uj;
                }
            }
        }
        out
    }

    /// (I − A)^{-1} D (I − A)^{-ᵀ}, by the autoregressive recursion
    /// Cov(Y_j, Y_i) = Σ_k a_jk Cov(Y_k, Y_i).
    pub fn covariance(&self) -> Array2<f64> {
        let p = self.p();
        // row j's lower part is a combination of earlier rows' lower parts
        let mut s = vec![0.0; p * p];
        for j in 0..p {
            let c = &self.coeffs[j];
            let lo = j - c.len();
            let (done, rest) = s.split_at_mut(j * p);
            let row = &mut rest[..j];
            for (t, &a) in c.iter().enumerate() {
                let src = &done[(lo + t) * p..(lo + t) * p + j];
                for (r, v) in row.iter_mut().zip(src) {
                    *r += a * v;
                }
            }
            // entries (lo + t, i) with i > lo + t live in later columns of
            // earlier rows; they were mirrored there when row i was built
            let mut d = self.resid_var[j];
            for (t, &a) in c.iter().enumerate() {
                d += a * rest[lo + t];
            }
            rest[j] = d;
            for i in 0..j {
                s[i * p + j] = s[j * p + i];
            }
        }
        Array2::from_shape_vec((p, p), s).expect("p x p")
    }

    /// Draws one N(0, Σ) vector by running the autoregression forward.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for j in 0..self.p() {
            let c = &self.coeffs[j];
            let lo = j - c.len();
            let mut v = self.resid_var[j].sqrt() * rng.sample::<f64, _>(StandardNormal);
            for (t, &a) in c.iter().enumerate() {
                v += a * out[lo + t];
            }
            out[j] = v;
        }
    }
}

/// Banded Cholesky estimate of the two-sample precision matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub regression: BandedRegression,
    /// Ω̂_τ = (I − Â)ᵀ D̂^{-1} (I − Â) / (1 − κ).
    pub omega_hat: Array2<f64>,
    pub tau: usize,
    pub kappa: f64,
}

impl PrecisionEstimate {
    pub fn a_hat(&self) -> Array2<f64> {
        self.regression.a_matrix()
    }

    pub fn d_hat(&self) -> &[f64] {
        self.regression.resid_var()
    }

    pub fn omega_diag(&self) -> Vec<f64> {
        self.omega_hat.diag().to_vec()
    }
}

fn check_tau(tau: usize, p: usize) -> Result<()> {
    if tau >= p {
        return Err(Error::InvalidInput(format!("band width {tau} must be below p = {p}")));
    }
    Ok(())
}

/// Gram matrix Σ_kl Y_kl Y_klᵀ over all pseudo-observation pairs, banded:
/// n₂ X₁ᵀX₁ + (n₁²/n₂) X₂ᵀX₂ − √(n₁/n₂) n₁n₂ (X̄₁X̄₂ᵀ + X̄₂X̄₁ᵀ).
pub fn pair_gram(data: &TwoSampleData, band: usize) -> SymBand {
    let (n1, n2) = (data.n1() as f64, data.n2() as f64);
    let p = data.p();
    let mut g = SymBand::zeros(p, band);
    g.add_scatter(data.x1(), n2);
    g.add_scatter(data.x2(), n1 * n1 / n2);
    let (m1, m2) = (data.mean1(), data.mean2());
    let w = -(n1 / n2).sqrt() * n1 * n2;
    for i in 0..p {
        for j in i.saturating_sub(band)..=i {
            g.add(i, j, w * (m1[i] * m2[j] + m2[i] * m1[j]));
        }
    }
    g
}

pub fn fit_banded_cholesky(data: &TwoSampleData, tau: usize) -> Result<PrecisionEstimate> {
    check_tau(tau, data.p())?;
    let gram = pair_gram(data, tau);
    let count = (data.n1() * data.n2()) as f64;
    let regression = BandedRegression::from_gram(&gram, count, tau);
    let kappa = data.kappa();
    let omega_hat = regression.inverse_covariance() / (1.0 - kappa);
    if omega_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("precision estimate"));
    }
    Ok(PrecisionEstimate {
        regression,
        omega_hat,
        tau,
        kappa,
    })
}

/// One-sample banded Cholesky fit on rows centred at their mean; residual
/// variances are mean squared residuals.
pub fn one_sample_cholesky(sample: ArrayView2<'_, f64>, tau: usize) -> Result<BandedRegression> {
    check_tau(tau, sample.ncols())?;
    if sample.nrows() < 2 {
        return Err(Error::InvalidInput("need at least two rows".into()));
    }
    let mut g = SymBand::zeros(sample.ncols(), tau);
    g.add_scatter(centered(sample).view(), 1.0);
    Ok(BandedRegression::from_gram(&g, sample.nrows() as f64, tau))
}

/// Σ̂ = (I − Â)^{-1} D̂ (I − Â)^{-ᵀ} from one sample.
pub fn one_sample_covariance_via_cholesky(sample: ArrayView2<'_, f64>, tau: usize) -> Result<Array2<f64>> {
    Ok(one_sample_cholesky(sample, tau)?.covariance())
}

/// ‖a − b‖₂ by power iteration (relative tolerance 1e-6).
pub fn spectral_error(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(spectral_norm((&a - &b).view(), 1e-6))
}

/// {0, 1, …, min(20, rows/2, p − 1)}.
pub fn default_candidates(rows: usize, p: usize) -> Vec<usize> {
    let top = MAX_DEFAULT_BAND.min(rows / 2).min(p.saturating_sub(1));
    (0..=top).collect()
}

/// Outcome of band-width selection: the chosen τ and the average
/// Frobenius risk of every evaluated candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSelection {
    pub tau: usize,
    pub risks: Vec<(usize, f64)>,
}

fn unbiased_covariance(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let c = centered(x);
    c.t().dot(&c) / (x.nrows() as f64 - 1.0)
}

/// Picks τ minimising the split-averaged ‖Σ̂_τ(first half) − S(second half)‖_F.
///
/// Rows are shuffled independently for each of `splits` splits, using
/// streams keyed by `seed`. Candidates at or above the first half's size
/// are skipped. Ties go to the smaller τ.
pub fn select_band_width(
    rows: ArrayView2<'_, f64>,
    candidates: &[usize],
    splits: usize,
    seed: u64,
) -> Result<BandSelection> {
    if candidates.is_empty() {
        return Err(Error::BandSelection("no candidates".into()));
    }
    let m = rows.nrows();
    let p = rows.ncols();
    let half = m / 2;
    let mut cands: Vec<usize> = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    if cands.len() == 1 {
        return Ok(BandSelection {
            tau: cands[0],
            risks: vec![(cands[0], f64::NAN)],
        });
    }
    let usable: Vec<usize> = cands.iter().copied().filter(|&t| t < half && t < p).collect();
    if usable.is_empty() || half < 2 || m - half < 2 || splits == 0 {
        return Err(Error::BandSelection(format!(
            "no usable candidate among {cands:?} for {m} rows"
        )));
    }
    let top = *usable.last().expect("non-empty");
    let mut totals = vec![0.0; usable.len()];
    let mut order: Vec<usize> = (0..m).collect();
    for split in 0..splits {
        let mut rng = rng::stream(&[seed, rng::purpose::BAND_SELECTION, split as u64]);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let first = rows.select(ndarray::Axis(0), &order[..half]);
        let second = rows.select(ndarray::Axis(0), &order[half..]);
        let target = unbiased_covariance(second.view());
        let mut gram = SymBand::zeros(p, top);
        gram.add_scatter(centered(first.view()).view(), 1.0);
        for (slot, &tau) in usable.iter().enumerate() {
            let fit = BandedRegression::from_gram(&gram, half as f64, tau);
            totals[slot] += frobenius_distance(fit.covariance().view(), target.view());
        }
    }
    let risks: Vec<(usize, f64)> = usable
        .iter()
        .zip(&totals)
        .map(|(&t, &tot)| (t, tot / splits as f64))
        .collect();
    let best = risks
        .iter()
        .fold(None::<(usize, f64)>, |acc, &(t, r)| match acc {
            Some((_, br)) if br <= r => acc,
            _ => Some((t, r)),
        })
        .expect("non-empty");
    Ok(BandSelection { tau: best.0, risks })
}

/// Band-width selection on both samples' rows, each centred at its own mean.
pub fn select_band_width_two_sample(
    data: &TwoSampleData,
    candidates: Option<&[usize]>,
    splits: usize,
    seed: u64,
) -> Result<BandSelection> {
    let rows = data.pooled_centered();
    let defaults;
    let cands = match candidates {
        Some(c) => c,
        None => {
            defaults = default_candidates(rows.nrows(), data.p());
            &defaults
        }
    };
    select_band_width(rows.view(), cands, splits, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_distr::Distribution;

    fn normal_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn band_matrix_edges() {
        let m = array![[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]];
        assert_eq!(band_matrix(m.view(), 2).unwrap().matrix, m);
        let diag = band_matrix(m.view(), 0).unwrap().matrix;
        assert_eq!(diag, Array2::from_diag(&m.diag()));
        assert!(band_matrix(m.view(), 3).is_err());
    }

    #[test]
    fn p_one_precision_is_inverse_pair_variance() {
        let d = TwoSampleData::new(array![[1.0], [3.0], [2.0]], array![[0.0], [4.0]]).unwrap();
        let est = fit_banded_cholesky(&d, 0).unwrap();
        // mean of (x − √1.5·y)² over the six pairs
        let c = 1.5f64.sqrt();
        let d1 = [1.0, 3.0, 2.0]
            .iter()
            .flat_map(|x| [0.0, 4.0].map(|y| (x - c * y) * (x - c * y)))
            .sum::<f64>()
            / 6.0;
        let kappa = 0.6;
        assert_abs_diff_eq!(est.omega_hat[[0, 0]], 1.0 / ((1.0 - kappa) * d1), epsilon = 1e-12);
        assert_abs_diff_eq!(est.d_hat()[0], d1, epsilon = 1e-12);
    }

    #[test]
    fn tau_zero_is_diagonal() {
        let d = TwoSampleData::new(normal_matrix(12, 5, 1), normal_matrix(9, 5, 2)).unwrap();
        let est = fit_banded_cholesky(&d, 0).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert_eq!(est.omega_hat[[i, j]], 0.0);
                }
            }
            assert_abs_diff_eq!(est.omega_hat[[i, i]], 1.0 / ((1.0 - est.kappa) * est.d_hat()[i]), epsilon = 1e-12);
        }
    }

    #[test]
    fn omega_hat_has_band_structure() {
        let d = TwoSampleData::new(normal_matrix(20, 8, 3), normal_matrix(25, 8, 4)).unwrap();
        let est = fit_banded_cholesky(&d, 2).unwrap();
        for ((i, j), v) in est.omega_hat.indexed_iter() {
            if i.abs_diff(j) > 2 {
                assert_eq!(*v, 0.0);
            }
            assert_abs_diff_eq!(*v, est.omega_hat[[j, i]], epsilon = 1e-12);
        }
        let a = est.a_hat();
        for ((i, j), v) in a.indexed_iter() {
            if j >= i || i - j > 2 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn covariance_inverts_precision() {
        let x = normal_matrix(40, 6, 9);
        let fit = one_sample_cholesky(x.view(), 2).unwrap();
        let prod = fit.covariance().dot(&fit.inverse_covariance());
        for ((i, j), v) in prod.indexed_iter() {
            assert_abs_diff_eq!(*v, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-10);
        }
    }

    #[test]
    fn tau_zero_one_sample_is_variances_about_mean() {
        let x = normal_matrix(15, 4, 5);
        let s = one_sample_covariance_via_cholesky(x.view(), 0).unwrap();
        let v = x.var_axis(ndarray::Axis(0), 0.0);
        for k in 0..4 {
            assert_abs_diff_eq!(s[[k, k]], v[k], epsilon = 1e-12);
        }
        assert_eq!(s[[0, 1]], 0.0);
    }

    #[test]
    fn single_candidate_returned() {
        let x = normal_matrix(10, 3, 1);
        let sel = select_band_width(x.view(), &[1], 5, 0).unwrap();
        assert_eq!(sel.tau, 1);
    }

    #[test]
    fn selection_errors_when_nothing_fits() {
        let x = normal_matrix(6, 10, 1);
        assert!(select_band_width(x.view(), &[3, 5], 5, 0).is_err());
        assert!(select_band_width(x.view(), &[], 5, 0).is_err());
    }

    #[test]
    fn selection_is_deterministic() {
        let x = normal_matrix(40, 12, 2);
        let a = select_band_width(x.view(), &[0, 1, 2, 3], 10, 42).unwrap();
        let b = select_band_width(x.view(), &[0, 1, 2, 3], 10, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spectral_error_basics() {
        let a = Array2::from_diag(&array![3.0, 3.0]);
        assert_abs_diff_eq!(spectral_error(a.view(), Array2::eye(2).view()).unwrap(), 2.0, epsilon = 1e-6);
        assert_eq!(spectral_error(a.view(), a.view()).unwrap(), 0.0);
    }
}
