//! K-fold cross-validation for hyperparameter tuning and model-type
//! comparison.
//!
//! Grids are supplied in ascending-complexity order (λ descending, depth
//! ascending, block count ascending); ties and the 1se rule both resolve
//! toward the earlier — simpler — grid entry.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::seed;

/// Assignment of observations to folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    /// Fold id in `[0, k)` per observation.
    pub assignments: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] != fold).collect()
    }
}

/// Randomly partition `[0, n)` into `k` folds with sizes ⌊n/k⌋ or ⌈n/k⌉.
/// Deterministic given `(n, k, seed)`.
pub fn kfold_split(n: usize, k: usize, seed_value: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::BadK { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed_value, "cv.kfold", 0));
    let mut assignments = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan {
        assignments,
        k,
        seed: seed_value,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionRule {
    /// Lowest mean squared prediction error.
    #[serde(rename = "min")]
    Min,
    /// Simplest grid value whose MSPE is within one standard error of the
    /// minimum.
    #[serde(rename = "1se")]
    OneSe,
}

#[derive(Clone, Debug)]
pub struct CvResult<H> {
    pub grid: Vec<H>,
    /// Pooled out-of-fold mean squared prediction error per grid value.
    pub mspe: Vec<f64>,
    /// Standard error of the per-fold MSPE means.
    pub mspe_se: Vec<f64>,
    pub chosen: usize,
}

impl<H> CvResult<H> {
    pub fn chosen_value(&self) -> &H {
        &self.grid[self.chosen]
    }
}

/// Anything that predicts a scalar from a feature row.
pub trait Predictor {
    fn predict_row(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> Predictor for F {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

impl Predictor for crate::ml::Tree {
    fn predict_row(&self, x: &[f64]) -> f64 {
        crate::ml::Tree::predict_row(self, x)
    }
}

impl Predictor for crate::ml::Forest {
    fn predict_row(&self, x: &[f64]) -> f64 {
        crate::ml::Forest::predict_row(self, x)
    }
}

impl Predictor for crate::ml::LinearModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        crate::ml::LinearModel::predict_row(self, x)
    }
}

/// Tune a hyperparameter by K-fold CV. For every grid value the fitter is
/// trained on K−1 folds and scored on the held-out fold, so each
/// observation is predicted exactly once.
pub fn cv_tune<H: Clone, P: Predictor>(
    fitter: impl Fn(&H, &Matrix, &[f64]) -> Result<P>,
    x: &Matrix,
    y: &[f64],
    grid: &[H],
    plan: &FoldPlan,
    rule: SelectionRule,
) -> Result<CvResult<H>> {
    if grid.is_empty() {
        return Err(Error::Internal("empty hyperparameter grid".into()));
    }
    if plan.n() != x.n_rows() || y.len() != x.n_rows() {
        return Err(Error::Internal("fold plan does not match data".into()));
    }

    let n = x.n_rows();
    let mut mspe = Vec::with_capacity(grid.len());
    let mut mspe_se = Vec::with_capacity(grid.len());
    for value in grid {
        let mut pooled = 0.0;
        let mut fold_means = Vec::with_capacity(plan.k);
        for fold in 0..plan.k {
            let train = plan.train_indices(fold);
            let test = plan.fold_indices(fold);
            let x_train = x.rows_subset(&train);
            let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = fitter(value, &x_train, &y_train).map_err(|e| Error::FitterFailed {
                fold,
                source: Box::new(e),
            })?;
            let mut fold_sum = 0.0;
            for &i in &test {
                let err = y[i] - model.predict_row(x.row(i));
                fold_sum += err * err;
            }
            pooled += fold_sum;
            fold_means.push(fold_sum / test.len() as f64);
        }
        mspe.push(pooled / n as f64);
        let mean = fold_means.iter().sum::<f64>() / plan.k as f64;
        let var = fold_means
            .iter()
            .map(|m| (m - mean) * (m - mean))
            .sum::<f64>()
            / (plan.k - 1) as f64;
        mspe_se.push((var / plan.k as f64).sqrt());
    }

    let mut arg_min = 0;
    for (i, v) in mspe.iter().enumerate() {
        if *v < mspe[arg_min] {
            arg_min = i;
        }
    }
    let chosen = match rule {
        SelectionRule::Min => arg_min,
        SelectionRule::OneSe => {
            let threshold = mspe[arg_min] + mspe_se[arg_min];
            (0..grid.len())
                .find(|&i| mspe[i] <= threshold)
                .unwrap_or(arg_min)
        }
    };

    Ok(CvResult {
        grid: grid.to_vec(),
        mspe,
        mspe_se,
        chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_division_folds() {
        let plan = kfold_split(10, 5, 3).unwrap();
        let mut seen = vec![false; 10];
        for fold in 0..5 {
            let f = plan.fold_indices(fold);
            assert_eq!(f.len(), 2);
            for i in f {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn leave_one_out() {
        let plan = kfold_split(10, 10, 1).unwrap();
        for fold in 0..10 {
            assert_eq!(plan.fold_indices(fold).len(), 1);
        }
    }

    #[test]
    fn deterministic_plans() {
        assert_eq!(kfold_split(23, 4, 9).unwrap(), kfold_split(23, 4, 9).unwrap());
        assert_ne!(
            kfold_split(23, 4, 9).unwrap().assignments,
            kfold_split(23, 4, 10).unwrap().assignments
        );
    }

    #[test]
    fn fold_sizes_differ_by_at_most_one() {
        let plan = kfold_split(23, 5, 2).unwrap();
        let sizes: Vec<usize> = (0..5).map(|f| plan.fold_indices(f).len()).collect();
        let min = *sizes.iter().min().unwrap();
        let max = *sizes.iter().max().unwrap();
        assert!(max - min <= 1);
        assert!(min > 0);
    }

    #[test]
    fn bad_k_rejected() {
        assert!(matches!(kfold_split(10, 1, 0), Err(Error::BadK { .. })));
        assert!(matches!(kfold_split(10, 11, 0), Err(Error::BadK { .. })));
    }

    fn toy_data() -> (Matrix, Vec<f64>) {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = xs.iter().map(|v| 2.0 * v + 1.0).collect();
        (Matrix::from_columns(&[xs]), y)
    }

    #[test]
    fn min_rule_picks_argmin() {
        // Fitters predict a constant offset from the truth; offset 0 wins.
        let (x, y) = toy_data();
        let plan = kfold_split(20, 5, 7).unwrap();
        let grid = vec![5.0, 0.0, 2.0];
        let result = cv_tune(
            |offset: &f64, _x: &Matrix, yt: &[f64]| {
                let mean = yt.iter().sum::<f64>() / yt.len() as f64 + offset;
                Ok(move |_row: &[f64]| mean)
            },
            &x,
            &y,
            &grid,
            &plan,
            SelectionRule::Min,
        )
        .unwrap();
        assert_eq!(result.chosen, 1);
    }

    #[test]
    fn one_se_prefers_simpler_within_band() {
        // Hand-built: two grid values with nearly equal MSPE; 1se takes the
        // first (simpler) one even though the second is the strict argmin.
        let (x, y) = toy_data();
        let plan = kfold_split(20, 4, 3).unwrap();
        let grid = vec![0.35, 0.0]; // complexity ascending; 0.35 is "simpler"
        let result = cv_tune(
            |offset: &f64, _x: &Matrix, yt: &[f64]| {
                let mean = yt.iter().sum::<f64>() / yt.len() as f64 + offset;
                Ok(move |_row: &[f64]| mean)
            },
            &x,
            &y,
            &grid,
            &plan,
            SelectionRule::OneSe,
        )
        .unwrap();
        assert_eq!(
            result.chosen, 0,
            "mspe {:?} se {:?}",
            result.mspe, result.mspe_se
        );
        // and never above min + 1se
        let min = result.mspe.iter().cloned().fold(f64::INFINITY, f64::min);
        let arg = result.mspe.iter().position(|v| *v == min).unwrap();
        assert!(result.mspe[result.chosen] <= min + result.mspe_se[arg] + 1e-12);
    }

    #[test]
    fn constant_fitter_mspe_is_out_of_fold_variance() {
        let (x, y) = toy_data();
        let plan = kfold_split(20, 5, 11).unwrap();
        let grid = vec![1usize, 2, 3];
        let result = cv_tune(
            |_g: &usize, _x: &Matrix, yt: &[f64]| {
                let mean = yt.iter().sum::<f64>() / yt.len() as f64;
                Ok(move |_row: &[f64]| mean)
            },
            &x,
            &y,
            &grid,
            &plan,
            SelectionRule::Min,
        )
        .unwrap();
        // identical across the grid, chosen = simplest
        assert_eq!(result.chosen, 0);
        assert!((result.mspe[0] - result.mspe[1]).abs() < 1e-12);
        assert!((result.mspe[1] - result.mspe[2]).abs() < 1e-12);
        // equals the mean over observations of (y_i − train-fold mean)²,
        // computed directly
        let mut expected = 0.0;
        for fold in 0..5 {
            let train = plan.train_indices(fold);
            let mean = train.iter().map(|&i| y[i]).sum::<f64>() / train.len() as f64;
            for i in plan.fold_indices(fold) {
                expected += (y[i] - mean) * (y[i] - mean);
            }
        }
        expected /= 20.0;
        assert!((result.mspe[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn fitter_errors_tagged_with_fold() {
        let (x, y) = toy_data();
        let plan = kfold_split(20, 4, 3).unwrap();
        let result = cv_tune(
            |_g: &usize, _x: &Matrix, _yt: &[f64]| -> Result<fn(&[f64]) -> f64> {
                Err(Error::EmptyInput)
            },
            &x,
            &y,
            &[1usize],
            &plan,
            SelectionRule::Min,
        );
        assert!(matches!(result, Err(Error::FitterFailed { fold: 0, .. })));
    }
}
