//! Small dense/banded linear algebra used by the precision estimator.

use ndarray::{Array1, Array2, ArrayView2};

/// Symmetric matrix storing only the entries with |i − j| ≤ band.
///
/// Row `i` keeps the `band + 1` entries (i, i−band) … (i, i); entries before
/// column 0 are unused padding.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    p: usize,
    band: usize,
    lower: Vec<f64>,
}

impl SymBand {
    pub fn zeros(p: usize, band: usize) -> Self {
        SymBand {
            p,
            band,
            lower: vec![0.0; p * (band + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn band(&self) -> usize {
        self.band
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.band);
        i * (self.band + 1) + (self.band - (i - j))
    }

    /// Entry (i, j); zero outside the band.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.band {
            0.0
        } else {
            self.lower[self.slot(hi, lo)]
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(hi, lo);
        self.lower[s] += v;
    }

    pub fn scale(&mut self, c: f64) {
        self.lower.iter_mut().for_each(|v| *v *= c);
    }

    /// Adds `weight · Σ_r x_r x_rᵀ` restricted to the band.
    pub fn add_scatter(&mut self, rows: ArrayView2<'_, f64>, weight: f64) {
        let p = self.p;
        let band = self.band;
        for row in rows.outer_iter() {
            let row = row.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| row.to_vec());
            for i in 0..p {
                let xi = row[i] * weight;
                if xi == 0.0 {
                    continue;
                }
                let lo = i.saturating_sub(band);
                let base = i * (band + 1) + band - i;
                for j in lo..=i {
                    self.lower[base + j] += xi * row[j];
                }
            }
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.p, self.p), |(i, j)| self.get(i, j))
    }
}

/// Solves `g x = rhs` for a symmetric positive (semi)definite `g` given as a
/// row-major `k×k` slice. Falls back to `g + ridge·I` with
/// `ridge = 1e-8 · trace(g)` when the plain factorisation breaks down.
/// Returns the solution and whether the ridge was needed.
pub fn spd_solve(g: &[f64], rhs: &[f64], k: usize) -> (Vec<f64>, bool) {
    if k == 0 {
        return (Vec::new(), false);
    }
    if let Some(l) = cholesky(g, k, 0.0) {
        return (cholesky_solve(&l, rhs, k), false);
    }
    let trace: f64 = (0..k).map(|i| g[i * k + i]).sum();
    let mut ridge = 1e-8 * trace.abs().max(f64::MIN_POSITIVE);
    loop {
        if let Some(l) = cholesky(g, k, ridge) {
            return (cholesky_solve(&l, rhs, k), true);
        }
        ridge *= 10.0;
    }
}

fn cholesky(g: &[f64], k: usize, ridge: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    let scale = (0..k).map(|i| g[i * k + i].abs()).fold(0.0, f64::max);
    for i in 0..k {
        for j in 0..=i {
            let mut s = g[i * k + j];
            if i == j {
                s += ridge;
            }
            for m in 0..j {
                s -= l[i * k + m] * l[j * k + m];
            }
            if i == j {
                if !(s > 1e-13 * scale) {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], rhs: &[f64], k: usize) -> Vec<f64> {
    let mut y = rhs.to_vec();
    for i in 0..k {
        let mut s = y[i];
        for m in 0..i {
            s -= l[i * k + m] * y[m];
        }
        y[i] = s / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = y[i];
        for m in i + 1..k {
            s -= l[m * k + i] * y[m];
        }
        y[i] = s / l[i * k + i];
    }
    y
}

pub fn frobenius_distance(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Largest singular value of `m` by power iteration on mᵀm.
///
/// Iterates until the Rayleigh quotient changes by less than `rel_tol`
/// (relative) between sweeps.
pub fn spectral_norm(m: ArrayView2<'_, f64>, rel_tol: f64) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 || m.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    // fixed, non-symmetric start so no eigenvector is missed by construction
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).fract());
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut lambda = 0.0_f64;
    for _ in 0..20_000 {
        let w = m.dot(&v);
        let u = m.t().dot(&w);
        let next = v.dot(&u);
        let un = u.dot(&u).sqrt();
        if un == 0.0 {
            return 0.0;
        }
        v = u / un;
        if (next - lambda).abs() <= rel_tol * 1e-3 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.max(0.0).sqrt()
}
