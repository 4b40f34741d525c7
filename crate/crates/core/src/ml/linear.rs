//! Lasso regression by cyclic coordinate descent, and post-selection OLS
//! importance weights.

use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 10_000;
const COEF_TOL: f64 = 1e-8;

/// A fitted linear model: `y ≈ intercept + X·coefficients`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    /// Indices of nonzero coefficients.
    pub selected: Vec<usize>,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept
            + x.iter()
                .zip(&self.coefficients)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// Penalized objective `‖y − intercept − Xβ‖² + λ‖β‖₁`.
    pub fn objective(&self, x: &Matrix, y: &[f64]) -> f64 {
        objective(x, y, self.intercept, &self.coefficients, self.lambda)
    }
}

pub(crate) fn objective(x: &Matrix, y: &[f64], intercept: f64, beta: &[f64], lambda: f64) -> f64 {
    let mut rss = 0.0;
    for i in 0..x.n_rows() {
        let pred: f64 = intercept
            + x.row(i)
                .iter()
                .zip(beta)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        let r = y[i] - pred;
        rss += r * r;
    }
    rss + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn check_standardized(x: &Matrix) -> Result<()> {
    let n = x.n_rows() as f64;
    for j in 0..x.n_cols() {
        let mean = x.column(j).iter().sum::<f64>() / n;
        if mean.abs() > 1e-6 {
            return Err(Error::NonStandardized { column: j, mean });
        }
    }
    Ok(())
}

/// Minimize `‖y − Xβ‖² + λ‖β‖₁` over β by cyclic coordinate descent with
/// soft-thresholding; the intercept is the mean of `y` (X is standardized,
/// so it enters no penalty). Converged when no coefficient moves more than
/// 1e-8 in a full sweep.
pub fn lasso_fit(x: &Matrix, y: &[f64], lambda: f64) -> Result<LinearModel> {
    let (model, converged) = lasso_fit_lenient(x, y, lambda)?;
    if !converged {
        return Err(Error::DidNotConverge {
            sweeps: MAX_SWEEPS,
            objective: model.objective(x, y),
        });
    }
    Ok(model)
}

/// Coordinate descent that hands back the best-effort model after the sweep
/// cap instead of failing; used inside CV loops where a stalled ridge walk
/// between near-collinear columns is prediction-equivalent to the optimum.
pub(crate) fn lasso_fit_lenient(x: &Matrix, y: &[f64], lambda: f64) -> Result<(LinearModel, bool)> {
    let n = x.n_rows();
    let k = x.n_cols();
    if n == 0 || y.len() != n {
        return Err(Error::EmptyInput);
    }
    if lambda < 0.0 {
        return Err(Error::Internal("lambda must be nonnegative".into()));
    }
    check_standardized(x)?;

    let intercept = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - intercept).collect();

    let cols: Vec<Vec<f64>> = (0..k).map(|j| x.column(j)).collect();
    let col_sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();

    let mut beta = vec![0.0; k];
    let mut residual = yc.clone();
    let mut converged = k == 0;
    let mut last_objective = f64::INFINITY;
    for _sweep in 0..MAX_SWEEPS {
        let mut max_delta: f64 = 0.0;
        for j in 0..k {
            if col_sq[j] == 0.0 {
                continue; // constant column, coefficient pinned at zero
            }
            let old = beta[j];
            // partial correlation with coordinate j removed from the fit
            let mut z = 0.0;
            for (r, xv) in residual.iter().zip(&cols[j]) {
                z += r * xv;
            }
            z += col_sq[j] * old;
            let new = soft_threshold(z, lambda / 2.0) / col_sq[j];
            if new != old {
                let delta = new - old;
                for (r, xv) in residual.iter_mut().zip(&cols[j]) {
                    *r -= delta * xv;
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        // stop on stalled coefficients, or on a stalled objective: with
        // near-collinear columns the coefficients wander along a flat ridge
        // long after the objective has converged
        let objective_now = residual.iter().map(|r| r * r).sum::<f64>()
            + lambda * beta.iter().map(|b| b.abs()).sum::<f64>();
        if max_delta < COEF_TOL || last_objective - objective_now < 1e-10 * (1.0 + objective_now) {
            converged = true;
            break;
        }
        last_objective = objective_now;
    }

    let selected = beta
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect();
    Ok((
        LinearModel {
            intercept,
            coefficients: beta,
            lambda,
            selected,
        },
        converged,
    ))
}

/// A descending λ grid for cross-validated Lasso: log-spaced from the
/// smallest λ that zeroes every coefficient down to `λ_max / 1000`.
pub fn lasso_lambda_grid(x: &Matrix, y: &[f64], n_values: usize) -> Vec<f64> {
    assert!(n_values >= 2);
    let n = x.n_rows() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let mut max_corr: f64 = 0.0;
    for j in 0..x.n_cols() {
        let dot: f64 = x
            .column(j)
            .iter()
            .zip(y)
            .map(|(xv, yv)| xv * (yv - mean))
            .sum();
        max_corr = max_corr.max(dot.abs());
    }
    let lambda_max = (2.0 * max_corr).max(1e-12);
    let lambda_min = lambda_max * 1e-3;
    let step = (lambda_min / lambda_max).ln() / (n_values - 1) as f64;
    (0..n_values)
        .map(|i| lambda_max * (step * i as f64).exp())
        .collect()
}

/// Importance weights: absolute values of OLS coefficients refit on just
/// the selected (standardized) features; unselected features get weight 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceWeights {
    /// One weight per feature column, zero outside the selected set.
    pub weights: Vec<f64>,
}

impl ImportanceWeights {
    pub fn uniform(k: usize) -> Self {
        ImportanceWeights {
            weights: vec![1.0; k],
        }
    }

    pub fn nonzero(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// OLS on the selected columns of standardized `x` (intercept absorbed by
/// centering `y`), returning `|coefficient|` per selected feature.
pub fn post_lasso_importance(x: &Matrix, y: &[f64], selected: &[usize]) -> Result<ImportanceWeights> {
    let n = x.n_rows();
    let k = x.n_cols();
    let mut weights = vec![0.0; k];
    if selected.is_empty() {
        return Ok(ImportanceWeights { weights });
    }
    if selected.len() >= n {
        return Err(Error::SingularDesign);
    }
    check_standardized(x)?;

    let mean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let xs = x.columns_subset(selected);
    let a = xs.to_nalgebra();
    let b = nalgebra::DVector::from_column_slice(&yc);
    let fit = crate::linalg::lstsq(&a, &b).map_err(|_| Error::SingularDesign)?;
    for (pos, &j) in selected.iter().enumerate() {
        weights[j] = fit.coef[pos].abs();
    }
    Ok(ImportanceWeights { weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::standardize;

    fn standardized(cols: &[Vec<f64>]) -> Matrix {
        standardize(&Matrix::from_columns(cols)).0
    }

    #[test]
    fn large_lambda_kills_all_coefficients() {
        let x = standardized(&[vec![1.0, 2.0, 3.0, 4.0], vec![4.0, 1.0, 3.0, 2.0]]);
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let mean = y.iter().sum::<f64>() / 4.0;
        let max_corr = (0..2)
            .map(|j| {
                x.column(j)
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| a * (b - mean))
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max);
        let model = lasso_fit(&x, &y, 2.0 * max_corr).unwrap();
        assert!(model.coefficients.iter().all(|b| *b == 0.0));
        assert!(model.selected.is_empty());
    }

    #[test]
    fn zero_lambda_orthonormal_is_ols() {
        // Orthogonal columns: coefficients are x_k'y / x_k'x_k.
        let x = Matrix::from_columns(&[
            vec![0.5, 0.5, -0.5, -0.5],
            vec![0.5, -0.5, 0.5, -0.5],
        ]);
        let y = vec![2.0, 1.0, -1.0, -2.0];
        let model = lasso_fit(&x, &y, 0.0).unwrap();
        for j in 0..2 {
            let num: f64 = x.column(j).iter().zip(&y).map(|(a, b)| a * b).sum();
            let den: f64 = x.column(j).iter().map(|a| a * a).sum();
            assert!((model.coefficients[j] - num / den).abs() < 1e-8);
        }
    }

    #[test]
    fn non_standardized_rejected() {
        let x = Matrix::from_columns(&[vec![1.0, 2.0, 3.0]]);
        assert!(matches!(
            lasso_fit(&x, &[1.0, 2.0, 3.0], 0.1),
            Err(Error::NonStandardized { .. })
        ));
    }

    #[test]
    fn objective_no_worse_than_zero_vector_or_ols() {
        let x = standardized(&[
            vec![0.3, -1.2, 0.8, 1.9, -0.4, 0.6],
            vec![1.1, 0.2, -0.7, 0.4, -1.5, 0.9],
        ]);
        let y = vec![1.0, -0.5, 0.7, 2.2, -1.3, 0.4];
        for lambda in [0.0, 0.3, 1.0, 5.0] {
            let model = lasso_fit(&x, &y, lambda).unwrap();
            let at_fit = model.objective(&x, &y);
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            let at_zero = objective(&x, &y, mean, &[0.0, 0.0], lambda);
            let ols = lasso_fit(&x, &y, 0.0).unwrap();
            let at_ols = objective(&x, &y, ols.intercept, &ols.coefficients, lambda);
            assert!(at_fit <= at_zero + 1e-8);
            assert!(at_fit <= at_ols + 1e-8);
        }
    }

    #[test]
    fn selection_monotone_in_lambda() {
        let x = standardized(&[
            vec![0.3, -1.2, 0.8, 1.9, -0.4, 0.6, 2.0, -0.9],
            vec![1.1, 0.2, -0.7, 0.4, -1.5, 0.9, 0.3, -0.2],
            vec![0.0, 1.0, 0.5, -0.5, 1.2, -1.1, 0.8, 0.1],
        ]);
        let y = vec![1.0, -0.5, 0.7, 2.2, -1.3, 0.4, 1.9, -0.6];
        let grid = lasso_lambda_grid(&x, &y, 12);
        let mut last = 0usize; // grid descends, so selection grows
        for lambda in grid {
            let m = lasso_fit(&x, &y, lambda).unwrap();
            assert!(m.selected.len() >= last);
            last = m.selected.len();
        }
    }

    #[test]
    fn post_lasso_empty_selection_gives_zeros() {
        let x = standardized(&[vec![1.0, 2.0, 3.0, 4.0]]);
        let w = post_lasso_importance(&x, &[1.0, 2.0, 3.0, 4.0], &[]).unwrap();
        assert_eq!(w.weights, vec![0.0]);
    }

    #[test]
    fn post_lasso_exact_relation() {
        let (xm, _) = standardize(&Matrix::from_columns(&[vec![1.0, 2.0, 3.0, 4.0, 5.0]]));
        let y: Vec<f64> = xm.column(0).iter().map(|v| 2.0 * v).collect();
        let w = post_lasso_importance(&xm, &y, &[0]).unwrap();
        assert!((w.weights[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn post_lasso_matches_normal_equations() {
        // Two selected features, n=5: compare against (X'X)^{-1}X'y solved
        // by hand with 2x2 matrix inversion.
        let x = standardized(&[
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![2.0, 1.0, 4.0, 3.0, 7.0],
        ]);
        let y = vec![1.3, 0.9, 2.8, 2.1, 4.6];
        let mean = y.iter().sum::<f64>() / 5.0;
        let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let (c0, c1) = (x.column(0), x.column(1));
        let a = c0.iter().map(|v| v * v).sum::<f64>();
        let b = c0.iter().zip(&c1).map(|(u, v)| u * v).sum::<f64>();
        let d = c1.iter().map(|v| v * v).sum::<f64>();
        let p = c0.iter().zip(&yc).map(|(u, v)| u * v).sum::<f64>();
        let q = c1.iter().zip(&yc).map(|(u, v)| u * v).sum::<f64>();
        let det = a * d - b * b;
        let beta0 = (d * p - b * q) / det;
        let beta1 = (a * q - b * p) / det;
        let w = post_lasso_importance(&x, &y, &[0, 1]).unwrap();
        assert!((w.weights[0] - beta0.abs()).abs() < 1e-10);
        assert!((w.weights[1] - beta1.abs()).abs() < 1e-10);
    }

    #[test]
    fn post_lasso_collinear_is_singular() {
        let base = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let x = standardized(&[base.clone(), base]);
        assert!(matches!(
            post_lasso_importance(&x, &[1.0, 2.0, 3.0, 4.0, 5.0], &[0, 1]),
            Err(Error::SingularDesign)
        ));
    }
}
