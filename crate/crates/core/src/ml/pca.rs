//! Principal component analysis on standardized features, used when no
//! pre-treatment outcomes are available to supervise blocking.

use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PcaCriterion {
    /// Keep exactly `k` components (clamped to [1, K]).
    FixedK(usize),
    /// Keep components until the marginal explained variance drops below
    /// half of the previous component's.
    Elbow,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcaResult {
    /// n × k component scores.
    pub scores: Matrix,
    /// k × K projection (rows are components, unit length).
    pub components: Matrix,
    /// Explained-variance fraction for every eigenvalue (length K).
    pub explained: Vec<f64>,
    /// Column means subtracted before projecting.
    pub means: Vec<f64>,
    pub k: usize,
}

impl PcaResult {
    /// Project fresh rows onto the retained components.
    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.n_rows(), self.k);
        for i in 0..x.n_rows() {
            for c in 0..self.k {
                let mut s = 0.0;
                for j in 0..x.n_cols() {
                    s += (x.get(i, j) - self.means[j]) * self.components.get(c, j);
                }
                out.set(i, c, s);
            }
        }
        out
    }
}

/// Eigendecomposition of the sample covariance (denominator n−1), components
/// ordered by descending eigenvalue.
pub fn pca_reduce(x: &Matrix, criterion: PcaCriterion) -> Result<PcaResult> {
    let n = x.n_rows();
    let k_all = x.n_cols();
    if n < 2 || k_all == 0 {
        return Err(Error::EmptyInput);
    }

    let means: Vec<f64> = (0..k_all)
        .map(|j| x.column(j).iter().sum::<f64>() / n as f64)
        .collect();
    let mut cov = nalgebra::DMatrix::<f64>::zeros(k_all, k_all);
    for a in 0..k_all {
        for b in a..k_all {
            let mut s = 0.0;
            for i in 0..n {
                s += (x.get(i, a) - means[a]) * (x.get(i, b) - means[b]);
            }
            let v = s / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..k_all).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&j| eig.eigenvalues[j].max(0.0))
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    let explained: Vec<f64> = if total > 0.0 {
        eigenvalues.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; k_all]
    };

    let k = match criterion {
        PcaCriterion::FixedK(k) => k.clamp(1, k_all),
        PcaCriterion::Elbow => {
            let mut k = 1;
            while k < k_all && explained[k] >= explained[k - 1] / 2.0 && explained[k] > 0.0 {
                k += 1;
            }
            k
        }
    };

    let mut components = Matrix::zeros(k, k_all);
    for (c, &j) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(j);
        // canonical sign: largest-magnitude entry positive
        let lead = (0..k_all).fold(0, |best, i| {
            if col[i].abs() > col[best].abs() {
                i
            } else {
                best
            }
        });
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..k_all {
            components.set(c, i, sign * col[i]);
        }
    }

    let result = PcaResult {
        scores: Matrix::zeros(0, 0),
        components,
        explained,
        means,
        k,
    };
    let scores = result.transform(x);
    Ok(PcaResult { scores, ..result })
}
