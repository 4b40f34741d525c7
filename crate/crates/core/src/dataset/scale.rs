//! Column standardization.
//!
//! Uses the sample standard deviation (denominator n−1), so the column
//! `[1, 2, 3]` standardizes to exactly `[-1, 0, 1]`. Constant columns are
//! mapped to all-zero and flagged rather than treated as errors.

use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    /// Sample standard deviation per column; 0.0 for flagged-constant columns.
    pub stddevs: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Scaler {
    pub fn fit(x: &Matrix) -> Scaler {
        let n = x.n_rows();
        let k = x.n_cols();
        let mut means = vec![0.0; k];
        let mut stddevs = vec![0.0; k];
        let mut constant = vec![false; k];
        for j in 0..k {
            let mut sum = 0.0;
            for i in 0..n {
                sum += x.get(i, j);
            }
            let mean = sum / n as f64;
            let mut ssd = 0.0;
            for i in 0..n {
                let d = x.get(i, j) - mean;
                ssd += d * d;
            }
            means[j] = mean;
            // Relative threshold: near-machine-epsilon spread counts as constant.
            let var = if n > 1 { ssd / (n - 1) as f64 } else { 0.0 };
            if var <= 1e-24 * (1.0 + mean * mean) {
                constant[j] = true;
                stddevs[j] = 0.0;
            } else {
                stddevs[j] = var.sqrt();
            }
        }
        Scaler {
            means,
            stddevs,
            constant,
        }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.n_rows(), x.n_cols());
        for i in 0..x.n_rows() {
            for j in 0..x.n_cols() {
                out.set(i, j, self.transform_value(j, x.get(i, j)));
            }
        }
        out
    }

    #[inline]
    pub fn transform_value(&self, j: usize, v: f64) -> f64 {
        if self.constant[j] {
            0.0
        } else {
            (v - self.means[j]) / self.stddevs[j]
        }
    }

    pub fn inverse(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.n_rows(), x.n_cols());
        for i in 0..x.n_rows() {
            for j in 0..x.n_cols() {
                let v = if self.constant[j] {
                    self.means[j]
                } else {
                    x.get(i, j) * self.stddevs[j] + self.means[j]
                };
                out.set(i, j, v);
            }
        }
        out
    }
}

/// Standardize every column to sample mean 0, sample standard deviation 1.
pub fn standardize(x: &Matrix) -> (Matrix, Scaler) {
    let scaler = Scaler::fit(x);
    (scaler.transform(x), scaler)
}
