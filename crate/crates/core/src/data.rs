use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Two samples of p-dimensional observations, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleData {
    x1: Array2<f64>,
    x2: Array2<f64>,
}

impl TwoSampleData {
    /// Both samples need at least two rows and the same number of columns;
    /// every entry must be finite.
    pub fn new(x1: Array2<f64>, x2: Array2<f64>) -> Result<Self> {
        if x1.ncols() != x2.ncols() {
            return Err(Error::Dimension(format!(
                "sample 1 has {} columns, sample 2 has {}",
                x1.ncols(),
                x2.ncols()
            )));
        }
        if x1.ncols() == 0 {
            return Err(Error::InvalidInput("p must be positive".into()));
        }
        if x1.nrows() < 2 || x2.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "each sample needs at least 2 observations (got {} and {})",
                x1.nrows(),
                x2.nrows()
            )));
        }
        for (label, x) in [("sample 1", &x1), ("sample 2", &x2)] {
            if let Some(((i, j), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{label} entry ({i}, {j}) is not finite: {v}"
                )));
            }
        }
        Ok(TwoSampleData { x1, x2 })
    }

    pub fn x1(&self) -> ArrayView2<'_, f64> {
        self.x1.view()
    }

    pub fn x2(&self) -> ArrayView2<'_, f64> {
        self.x2.view()
    }

    pub fn p(&self) -> usize {
        self.x1.ncols()
    }

    pub fn n1(&self) -> usize {
        self.x1.nrows()
    }

    pub fn n2(&self) -> usize {
        self.x2.nrows()
    }

    /// n = n1·n2/(n1 + n2).
    pub fn n_eff(&self) -> f64 {
        let (n1, n2) = (self.n1() as f64, self.n2() as f64);
        n1 * n2 / (n1 + n2)
    }

    /// κ = n1/(n1 + n2).
    pub fn kappa(&self) -> f64 {
        self.n1() as f64 / (self.n1() + self.n2()) as f64
    }

    pub fn mean1(&self) -> Array1<f64> {
        column_means(self.x1.view())
    }

    pub fn mean2(&self) -> Array1<f64> {
        column_means(self.x2.view())
    }

    /// Restriction to a subset of columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<TwoSampleData> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.p()) {
            return Err(Error::InvalidInput(format!(
                "column {bad} out of range for p = {}",
                self.p()
            )));
        }
        TwoSampleData::new(
            self.x1.select(Axis(1), cols),
            self.x2.select(Axis(1), cols),
        )
    }

    /// Rows of both samples centred at their own sample means, stacked.
    pub fn pooled_centered(&self) -> Array2<f64> {
        let c1 = centered(self.x1.view());
        let c2 = centered(self.x2.view());
        ndarray::concatenate(Axis(0), &[c1.view(), c2.view()]).expect("same column count")
    }
}

pub fn column_means(x: ArrayView2<'_, f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).expect("at least one row")
}

pub fn centered(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mean = column_means(x);
    &x - &mean
}

/// Unbiased per-column sample variances.
pub fn column_variances(x: ArrayView2<'_, f64>) -> Array1<f64> {
    x.var_axis(Axis(0), 1.0)
}
