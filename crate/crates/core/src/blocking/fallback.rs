//! Blocking with reduced data: one pre-period, no pre-period outcomes, or
//! a partition tree carried over from an auxiliary sample.

use crate::blocking::grid::{adaptive_grid, uniform_quantile_grid};
use crate::blocking::partition::{GridProjection, Partition, PartitionDefinition};
use crate::blocking::vs::YPRE_COLUMN;
use crate::cv::{cv_tune, kfold_split, SelectionRule};
use crate::dataset::{standardize, FeatureMatrix, Matrix, PanelDataset, Period};
use crate::error::{Error, Result};
use crate::ml::linear::lasso_fit_lenient;
use crate::ml::{lasso_lambda_grid, pca_reduce, post_lasso_importance, tree_prune_to_min_leaf, PcaCriterion, Tree};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `y_pre1` weighs as much as all selected covariates combined.
    Sum,
    /// `y_pre1` takes the average selected-covariate weight.
    Mean,
}

pub enum FallbackMode<'a> {
    /// Lasso-select covariates against `y_pre1`, then build an adaptive
    /// grid over `{y_pre1} ∪ X*`.
    SinglePre { weight_rule: WeightRule },
    /// PCA-reduce the covariates and grid the leading components at the
    /// finest granularity keeping every cell at `c_B`.
    ZeroPre,
    /// Apply a partition tree fit on an auxiliary sample, pruning until
    /// every cell holds `c_B` units here.
    Auxiliary {
        tree: &'a Tree,
        features: &'a [String],
    },
}

/// Powers of two up to n/c_B; the granularity grid for fallback CV.
fn budget_grid(n: usize, c_b: usize) -> Vec<usize> {
    let max = (n / c_b).max(1);
    let mut grid = vec![1usize];
    while *grid.last().unwrap() * 2 <= max {
        grid.push(grid.last().unwrap() * 2);
    }
    grid
}

pub fn fallback_blocking(
    panel: &PanelDataset,
    mode: FallbackMode<'_>,
    c_b: usize,
    seed_value: u64,
) -> Result<Partition> {
    let n = panel.n_units();
    if n < 2 * c_b {
        return Err(Error::TooFewUnits {
            need: 2 * c_b,
            have: n,
        });
    }
    match mode {
        FallbackMode::SinglePre { weight_rule } => single_pre(panel, weight_rule, c_b, seed_value),
        FallbackMode::ZeroPre => zero_pre(panel, c_b),
        FallbackMode::Auxiliary { tree, features } => auxiliary(panel, tree, features, c_b),
    }
}

fn single_pre(
    panel: &PanelDataset,
    weight_rule: WeightRule,
    c_b: usize,
    seed_value: u64,
) -> Result<Partition> {
    let n = panel.n_units();
    let y1 = panel.outcome(Period::Pre1).map_err(|_| Error::ModeDataMismatch {
        mode: "single_pre".into(),
        reason: "panel has no pre1 outcome".into(),
    })?;
    if panel.n_covariates() == 0 {
        // nothing to select: grid on the outcome alone
        return grid_on(panel, &[YPRE_COLUMN.to_string()], vec![y1.clone()], &[1.0], &y1, c_b, seed_value);
    }

    let (x_std, _) = standardize(&panel.covariates);
    let grid = lasso_lambda_grid(&x_std, &y1, 20);
    let plan = kfold_split(n, 5.min(n), seed::derive(seed_value, "fallback.lambda", 0))?;
    let tuned = cv_tune(
        |lambda: &f64, xt: &Matrix, yt: &[f64]| {
            let (xs, sc) = standardize(xt);
            let (model, _) = lasso_fit_lenient(&xs, yt, *lambda)?;
            Ok(move |row: &[f64]| {
                let std_row: Vec<f64> =
                    row.iter().enumerate().map(|(j, v)| sc.transform_value(j, *v)).collect();
                model.predict_row(&std_row)
            })
        },
        &x_std,
        &y1,
        &grid,
        &plan,
        SelectionRule::Min,
    )?;
    let (model, _) = lasso_fit_lenient(&x_std, &y1, *tuned.chosen_value())?;
    let weights = post_lasso_importance(&x_std, &y1, &model.selected)?;

    if model.selected.is_empty() {
        return grid_on(panel, &[YPRE_COLUMN.to_string()], vec![y1.clone()], &[1.0], &y1, c_b, seed_value);
    }

    let selected_weights: Vec<f64> = model.selected.iter().map(|&j| weights.weights[j]).collect();
    let y_weight = match weight_rule {
        WeightRule::Sum => selected_weights.iter().sum::<f64>(),
        WeightRule::Mean => selected_weights.iter().sum::<f64>() / selected_weights.len() as f64,
    };
    let mut names = vec![YPRE_COLUMN.to_string()];
    let mut cols = vec![y1.clone()];
    let mut w = vec![y_weight];
    for (&j, &wj) in model.selected.iter().zip(&selected_weights) {
        names.push(panel.covariate_names[j].clone());
        cols.push(panel.covariates.column(j));
        w.push(wj);
    }
    grid_on(panel, &names, cols, &w, &y1, c_b, seed_value)
}

fn grid_on(
    panel: &PanelDataset,
    names: &[String],
    cols: Vec<Vec<f64>>,
    weights: &[f64],
    y_target: &[f64],
    c_b: usize,
    seed_value: u64,
) -> Result<Partition> {
    let n = panel.n_units();
    let fm = FeatureMatrix::new(names.to_vec(), Matrix::from_columns(&cols));
    let budgets = budget_grid(n, c_b);
    let plan = kfold_split(n, 5.min(n), seed::derive(seed_value, "fallback.budget", 0))?;
    adaptive_grid(&fm, weights, y_target, &budgets, c_b, &plan)
}

fn zero_pre(panel: &PanelDataset, c_b: usize) -> Result<Partition> {
    if panel.n_covariates() == 0 {
        return Err(Error::ModeDataMismatch {
            mode: "zero_pre".into(),
            reason: "no covariates to reduce".into(),
        });
    }
    let (x_std, scaler) = standardize(&panel.covariates);
    let pca = pca_reduce(&x_std, PcaCriterion::Elbow)?;

    // fold the standardization into the projection so replay runs on raw
    // covariate values
    let k = pca.k;
    let kk = panel.n_covariates();
    let mut components = Matrix::zeros(k, kk);
    let mut means = vec![0.0; kk];
    for j in 0..kk {
        if scaler.constant[j] {
            means[j] = scaler.means[j];
            continue;
        }
        means[j] = scaler.means[j] + scaler.stddevs[j] * pca.means[j];
        for c in 0..k {
            components.set(c, j, pca.components.get(c, j) / scaler.stddevs[j]);
        }
    }
    let projection = GridProjection {
        features: panel.covariate_names.clone(),
        means,
        components,
    };
    let raw_fm = FeatureMatrix::new(panel.covariate_names.clone(), panel.covariates.clone());
    uniform_quantile_grid(&raw_fm, &pca.scores, Some(projection), c_b)
}

fn auxiliary(
    panel: &PanelDataset,
    tree: &Tree,
    features: &[String],
    c_b: usize,
) -> Result<Partition> {
    let cols: Vec<usize> = features
        .iter()
        .map(|f| {
            panel
                .covariate_names
                .iter()
                .position(|c| c == f)
                .ok_or_else(|| Error::ModeDataMismatch {
                    mode: "auxiliary".into(),
                    reason: format!("covariate `{f}` not present in the main sample"),
                })
        })
        .collect::<Result<_>>()?;
    let data = panel.covariates.columns_subset(&cols);
    let pruned = tree_prune_to_min_leaf(tree, &data, c_b)?;
    let def = PartitionDefinition::Tree {
        features: features.to_vec(),
        scaler: None,
        tree: pruned,
    };
    let fm = FeatureMatrix::new(features.to_vec(), data);
    Partition::from_definition(def, &fm, c_b)
}
