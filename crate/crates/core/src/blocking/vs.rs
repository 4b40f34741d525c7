//! Variable Selection blocking: predict the later pre-period outcome from
//! the earlier one plus covariates, optionally Lasso-select the feature
//! set, partition with a CART tree whose depth is tuned by CV, then assign
//! blocks on updated data and prune until every block reaches `c_B`.

use serde::{Deserialize, Serialize};

use crate::blocking::partition::{Partition, PartitionDefinition};
use crate::cv::{cv_tune, kfold_split, SelectionRule};
use crate::dataset::{FeatureMatrix, Matrix, PanelDataset, Period, Scaler};
use crate::error::{Error, Result};
use crate::ml::linear::lasso_fit_lenient;
use crate::ml::{
    cart_fit, forest_fit, lasso_lambda_grid, post_lasso_importance, tree_prune_to_min_leaf,
    Forest, ForestConfig, Node, SplitCriterion, Tree,
};
use crate::seed;

/// Column name for the lagged outcome pseudo-feature.
pub const YPRE_COLUMN: &str = "__y_pre";
/// Column name for the predicted-outcome pseudo-feature.
pub const YHAT_COLUMN: &str = "__y_hat";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSelection {
    /// Run the Lasso stage when the covariate count is large
    /// (K > 10 or K > n/10).
    Auto,
    On,
    Off,
}

#[derive(Clone, Debug)]
pub struct VsOptions {
    pub c_b: usize,
    pub feature_selection: FeatureSelection,
    pub include_yhat: bool,
    pub criterion: SplitCriterion,
    pub forest: ForestConfig,
    pub cv_folds: usize,
    pub lambda_grid_size: usize,
    pub selection_rule: SelectionRule,
    pub depth_cap: usize,
}

impl Default for VsOptions {
    fn default() -> Self {
        VsOptions {
            c_b: 4,
            feature_selection: FeatureSelection::Auto,
            include_yhat: true,
            criterion: SplitCriterion::Mse,
            forest: ForestConfig::default(),
            cv_folds: 5,
            lambda_grid_size: 20,
            selection_rule: SelectionRule::Min,
            depth_cap: 8,
        }
    }
}

/// The feature set a strategy settled on, with importance weights parallel
/// to `names`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedFeatures {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum FeatureEra {
    /// pre1-era values: the tree's training inputs.
    Training,
    /// pre2-era values: what blocks are finally assigned on.
    Updated,
}

enum TreeFit {
    Single(Tree),
    Seeded {
        seed_def: PartitionDefinition,
        trees: Vec<Tree>,
    },
}

/// A fitted Variable Selection design. Kept around so the same fit can be
/// scored out of sample (training-era features) and then produce the final
/// assignment partition (updated features).
pub struct VsFit {
    options: VsOptions,
    candidate_names: Vec<String>,
    pub selected: SelectedFeatures,
    sel_idx: Vec<usize>,
    scaler_sel: Scaler,
    g_pre1: Option<Forest>,
    g_pre2: Option<Forest>,
    fit: TreeFit,
    pub chosen_depth: usize,
    pub feature_selection_ran: bool,
    fallback_mean: f64,
}

fn single_leaf_tree(prediction: f64, count: usize, min_leaf: usize) -> Tree {
    Tree {
        root: Node::Leaf {
            prediction,
            count,
            leaf_id: 0,
        },
        max_depth: 0,
        min_leaf,
        n_leaves: 1,
    }
}

/// [X, Z_era] input matrix for the prediction forests.
fn model_features(panel: &PanelDataset, units: &[usize], era: FeatureEra) -> Result<Matrix> {
    let period = match era {
        FeatureEra::Training => Period::Pre1,
        FeatureEra::Updated => Period::Pre2,
    };
    let mut cols: Vec<Vec<f64>> = (0..panel.n_covariates())
        .map(|j| {
            units
                .iter()
                .map(|&i| panel.covariates.get(i, j))
                .collect::<Vec<f64>>()
        })
        .collect();
    if let Some(z) = panel.time_varying_at(period)? {
        for j in 0..z.n_cols() {
            cols.push(units.iter().map(|&i| z.get(i, j)).collect());
        }
    }
    Ok(Matrix::from_columns(&cols))
}

fn check_reserved_names(panel: &PanelDataset) -> Result<()> {
    let clash = panel
        .covariate_names
        .iter()
        .chain(panel.time_varying.iter().flat_map(|tv| tv.names.iter()))
        .find(|n| n.starts_with("__"));
    if let Some(name) = clash {
        return Err(Error::BadSchema(format!(
            "column name `{name}` collides with reserved pseudo-feature names"
        )));
    }
    Ok(())
}

impl VsFit {
    /// Run the fitting pipeline on `panel` (which must carry at least two
    /// pre-periods).
    pub fn fit(
        panel: &PanelDataset,
        options: &VsOptions,
        subgroup_seed: Option<&Partition>,
        seed_value: u64,
    ) -> Result<VsFit> {
        check_reserved_names(panel)?;
        let n = panel.n_units();
        if n < 2 * options.c_b {
            return Err(Error::TooFewUnits {
                need: 2 * options.c_b,
                have: n,
            });
        }
        let y1 = panel.outcome(Period::Pre1)?;
        let y2 = panel.outcome(Period::Pre2)?;
        let all: Vec<usize> = (0..n).collect();

        // prediction models for the ŷ pseudo-feature, trained on [X, Z_pre1]
        let x_model = model_features(panel, &all, FeatureEra::Training)?;
        let (g_pre1, g_pre2) = if options.include_yhat && x_model.n_cols() > 0 {
            let g1 = forest_fit(&x_model, &y1, &options.forest, seed::derive(seed_value, "vs.g1", 0))?;
            let g2 = forest_fit(&x_model, &y2, &options.forest, seed::derive(seed_value, "vs.g2", 0))?;
            (Some(g1), Some(g2))
        } else {
            (None, None)
        };

        let raw = candidate_matrix(panel, &all, FeatureEra::Training, g_pre1.as_ref())?;
        let (std_all, scaler_all) = crate::dataset::standardize(&raw.values);

        // feature-selection stage
        let k_real = raw.names.iter().filter(|n| !n.starts_with("__")).count();
        let run_selection = match options.feature_selection {
            FeatureSelection::On => true,
            FeatureSelection::Off => false,
            FeatureSelection::Auto => k_real > 10 || k_real * 10 > n,
        };
        let (sel_idx, selected) = if run_selection {
            let grid = lasso_lambda_grid(&std_all, &y2, options.lambda_grid_size);
            let plan = kfold_split(n, options.cv_folds.min(n), seed::derive(seed_value, "vs.lambda", 0))?;
            let tuned = cv_tune(
                |lambda: &f64, xt: &Matrix, yt: &[f64]| {
                    let (xs, sc) = crate::dataset::standardize(xt);
                    let (model, _) = lasso_fit_lenient(&xs, yt, *lambda)?;
                    Ok(move |row: &[f64]| {
                        let std_row: Vec<f64> =
                            row.iter().enumerate().map(|(j, v)| sc.transform_value(j, *v)).collect();
                        model.predict_row(&std_row)
                    })
                },
                &std_all,
                &y2,
                &grid,
                &plan,
                options.selection_rule,
            )?;
            let (model, _) = lasso_fit_lenient(&std_all, &y2, *tuned.chosen_value())?;
            let weights = post_lasso_importance(&std_all, &y2, &model.selected)?;
            let names: Vec<String> = model.selected.iter().map(|&j| raw.names[j].clone()).collect();
            let w: Vec<f64> = model.selected.iter().map(|&j| weights.weights[j]).collect();
            (model.selected, SelectedFeatures { names, weights: w })
        } else {
            let idx: Vec<usize> = (0..raw.names.len()).collect();
            let names = raw.names.clone();
            let weights = vec![1.0; names.len()];
            (idx, SelectedFeatures { names, weights })
        };

        let std_sel = std_all.columns_subset(&sel_idx);
        let scaler_sel = Scaler {
            means: sel_idx.iter().map(|&j| scaler_all.means[j]).collect(),
            stddevs: sel_idx.iter().map(|&j| scaler_all.stddevs[j]).collect(),
            constant: sel_idx.iter().map(|&j| scaler_all.constant[j]).collect(),
        };

        // depth grid: 0..=min(cap, ⌈log₂(n/c_B)⌉)
        let max_by_n = ((n as f64 / options.c_b as f64).log2().ceil()).max(0.0) as usize;
        let depths: Vec<usize> = (0..=options.depth_cap.min(max_by_n)).collect();
        let fallback_mean = y2.iter().sum::<f64>() / n as f64;

        let (fit, chosen_depth) = match subgroup_seed {
            None => {
                let plan = kfold_split(n, options.cv_folds.min(n), seed::derive(seed_value, "vs.depth", 0))?;
                let tuned = cv_tune(
                    |d: &usize, xt: &Matrix, yt: &[f64]| cart_fit(xt, yt, *d, options.c_b, options.criterion),
                    &std_sel,
                    &y2,
                    &depths,
                    &plan,
                    options.selection_rule,
                )?;
                let depth = *tuned.chosen_value();
                let tree = cart_fit(&std_sel, &y2, depth, options.c_b, options.criterion)?;
                (TreeFit::Single(tree), depth)
            }
            Some(seed_partition) => {
                let seed_def = seed_partition.definition.clone();
                let seed_cells = seed_def.assign(&raw)?;
                let n_cells = seed_def.n_blocks();
                let plan = kfold_split(n, options.cv_folds.min(n), seed::derive(seed_value, "vs.depth", 0))?;
                let depth = tune_seeded_depth(
                    &std_sel,
                    &y2,
                    &seed_cells,
                    n_cells,
                    &depths,
                    &plan,
                    options,
                    fallback_mean,
                )?;
                let trees = fit_seeded_trees(&std_sel, &y2, &seed_cells, n_cells, depth, options, fallback_mean)?;
                (TreeFit::Seeded { seed_def, trees }, depth)
            }
        };

        Ok(VsFit {
            options: options.clone(),
            candidate_names: raw.names,
            selected,
            sel_idx,
            scaler_sel,
            g_pre1,
            g_pre2,
            fit,
            chosen_depth,
            feature_selection_ran: run_selection,
            fallback_mean,
        })
    }

    pub fn c_b(&self) -> usize {
        self.options.c_b
    }

    /// Raw candidate features for any unit subset of a schema-compatible
    /// panel, in this fit's column layout.
    pub(crate) fn candidate_features(
        &self,
        panel: &PanelDataset,
        units: &[usize],
        era: FeatureEra,
    ) -> Result<FeatureMatrix> {
        let g = match era {
            FeatureEra::Training => self.g_pre1.as_ref(),
            FeatureEra::Updated => self.g_pre2.as_ref(),
        };
        let fm = candidate_matrix(panel, units, era, g)?;
        if fm.names != self.candidate_names {
            return Err(Error::ReplayMismatch(
                "panel columns do not match the fitted design".into(),
            ));
        }
        Ok(fm)
    }

    fn standardized_selected(&self, fm: &FeatureMatrix) -> Matrix {
        let cols: Vec<usize> = self
            .sel_idx
            .iter()
            .map(|&j| j) // candidate layout is identical by construction
            .collect();
        let raw_sel = fm.values.columns_subset(&cols);
        self.scaler_sel.transform(&raw_sel)
    }

    /// The raw updated feature matrix the final partition is defined on;
    /// replaying the partition definition against it must reproduce
    /// `block_of`.
    pub fn replay_features(&self, panel: &PanelDataset) -> Result<FeatureMatrix> {
        let all: Vec<usize> = (0..panel.n_units()).collect();
        self.candidate_features(panel, &all, FeatureEra::Updated)
    }

    /// Match space for pairing and rerandomization: standardized updated
    /// selected features with importance weights. Falls back to all
    /// candidates, unit weights, when the selection is empty.
    pub fn match_space(&self, panel: &PanelDataset) -> Result<(Matrix, Vec<f64>)> {
        let all: Vec<usize> = (0..panel.n_units()).collect();
        let fm = self.candidate_features(panel, &all, FeatureEra::Updated)?;
        if !self.sel_idx.is_empty() && self.selected.weights.iter().any(|w| *w > 0.0) {
            Ok((self.standardized_selected(&fm), self.selected.weights.clone()))
        } else {
            let (std_all, _) = crate::dataset::standardize(&fm.values);
            let k = std_all.n_cols();
            Ok((std_all, vec![1.0; k]))
        }
    }

    /// Out-of-sample prediction of the pre2 outcome from training-era
    /// features; the block-mean model behind strategy comparison.
    pub fn predict_training_era(&self, panel: &PanelDataset, units: &[usize]) -> Result<Vec<f64>> {
        let fm = self.candidate_features(panel, units, FeatureEra::Training)?;
        let std_sel = self.standardized_selected(&fm);
        match &self.fit {
            TreeFit::Single(tree) => Ok((0..units.len()).map(|i| tree.predict_row(std_sel.row(i))).collect()),
            TreeFit::Seeded { seed_def, trees } => {
                let cells = seed_def.assign(&fm)?;
                Ok((0..units.len())
                    .map(|i| {
                        trees
                            .get(cells[i])
                            .map_or(self.fallback_mean, |t| t.predict_row(std_sel.row(i)))
                    })
                    .collect())
            }
        }
    }

    /// Assign blocks on updated data and prune until every block holds at
    /// least `c_B` units.
    pub fn final_partition(&self, panel: &PanelDataset) -> Result<Partition> {
        let all: Vec<usize> = (0..panel.n_units()).collect();
        let fm = self.candidate_features(panel, &all, FeatureEra::Updated)?;
        let std_sel = self.standardized_selected(&fm);
        let c_b = self.options.c_b;

        let definition = match &self.fit {
            TreeFit::Single(tree) => {
                let pruned = tree_prune_to_min_leaf(tree, &std_sel, c_b)?;
                PartitionDefinition::Tree {
                    features: self.selected.names.clone(),
                    scaler: Some(self.scaler_sel.clone()),
                    tree: pruned,
                }
            }
            TreeFit::Seeded { seed_def, trees } => {
                let cells = seed_def.assign(&fm)?;
                let n_cells = seed_def.n_blocks();
                let mut subs = Vec::with_capacity(n_cells);
                let mut offsets = Vec::with_capacity(n_cells);
                let mut offset = 0usize;
                for cell in 0..n_cells {
                    let members: Vec<usize> =
                        (0..cells.len()).filter(|&i| cells[i] == cell).collect();
                    let tree = trees
                        .get(cell)
                        .cloned()
                        .unwrap_or_else(|| single_leaf_tree(self.fallback_mean, 0, c_b));
                    let cell_rows = std_sel.rows_subset(&members);
                    let pruned = tree_prune_to_min_leaf(&tree, &cell_rows, c_b)?;
                    offsets.push(offset);
                    offset += pruned.n_leaves;
                    subs.push(PartitionDefinition::Tree {
                        features: self.selected.names.clone(),
                        scaler: Some(self.scaler_sel.clone()),
                        tree: pruned,
                    });
                }
                PartitionDefinition::Composed {
                    seed: Box::new(seed_def.clone()),
                    subs,
                    offsets,
                }
            }
        };
        Partition::from_definition(definition, &fm, c_b)
    }
}

fn candidate_matrix(
    panel: &PanelDataset,
    units: &[usize],
    era: FeatureEra,
    g: Option<&Forest>,
) -> Result<FeatureMatrix> {
    let outcome_period = match era {
        FeatureEra::Training => Period::Pre1,
        FeatureEra::Updated => Period::Pre2,
    };
    let y = panel.outcome(outcome_period)?;
    let mut names = vec![YPRE_COLUMN.to_string()];
    let mut cols: Vec<Vec<f64>> = vec![units.iter().map(|&i| y[i]).collect()];
    if let Some(model) = g {
        let x_model = model_features(panel, units, era)?;
        names.push(YHAT_COLUMN.to_string());
        cols.push(model.predict(&x_model));
    }
    for j in 0..panel.n_covariates() {
        names.push(panel.covariate_names[j].clone());
        cols.push(units.iter().map(|&i| panel.covariates.get(i, j)).collect());
    }
    let z_period = match era {
        FeatureEra::Training => Period::Pre1,
        FeatureEra::Updated => Period::Pre2,
    };
    if let Some(z) = panel.time_varying_at(z_period)? {
        let tv = panel.time_varying.as_ref().unwrap();
        for j in 0..z.n_cols() {
            names.push(tv.names[j].clone());
            cols.push(units.iter().map(|&i| z.get(i, j)).collect());
        }
    }
    Ok(FeatureMatrix::new(names, Matrix::from_columns(&cols)))
}

#[allow(clippy::too_many_arguments)]
fn tune_seeded_depth(
    std_sel: &Matrix,
    y2: &[f64],
    seed_cells: &[usize],
    n_cells: usize,
    depths: &[usize],
    plan: &crate::cv::FoldPlan,
    options: &VsOptions,
    fallback_mean: f64,
) -> Result<usize> {
    let n = y2.len();
    let mut best = (f64::INFINITY, depths[0]);
    for &depth in depths {
        let mut pooled = 0.0;
        for fold in 0..plan.k {
            let train = plan.train_indices(fold);
            let test = plan.fold_indices(fold);
            let cells_train: Vec<usize> = train.iter().map(|&i| seed_cells[i]).collect();
            let x_train = std_sel.rows_subset(&train);
            let y_train: Vec<f64> = train.iter().map(|&i| y2[i]).collect();
            let trees = fit_seeded_trees(&x_train, &y_train, &cells_train, n_cells, depth, options, fallback_mean)?;
            for &i in &test {
                let pred = trees
                    .get(seed_cells[i])
                    .map_or(fallback_mean, |t| t.predict_row(std_sel.row(i)));
                let err = y2[i] - pred;
                pooled += err * err;
            }
        }
        let mspe = pooled / n as f64;
        if mspe < best.0 {
            best = (mspe, depth);
        }
    }
    Ok(best.1)
}

/// One tree per seed cell; cells too small to split get a single leaf at
/// the cell mean.
fn fit_seeded_trees(
    std_sel: &Matrix,
    y2: &[f64],
    seed_cells: &[usize],
    n_cells: usize,
    depth: usize,
    options: &VsOptions,
    fallback_mean: f64,
) -> Result<Vec<Tree>> {
    let mut trees = Vec::with_capacity(n_cells);
    for cell in 0..n_cells {
        let members: Vec<usize> = (0..seed_cells.len()).filter(|&i| seed_cells[i] == cell).collect();
        if members.is_empty() {
            trees.push(single_leaf_tree(fallback_mean, 0, options.c_b));
            continue;
        }
        let ys: Vec<f64> = members.iter().map(|&i| y2[i]).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        if members.len() < 2 * options.c_b {
            trees.push(single_leaf_tree(mean, members.len(), options.c_b));
            continue;
        }
        let xs = std_sel.rows_subset(&members);
        trees.push(cart_fit(&xs, &ys, depth, options.c_b, options.criterion)?);
    }
    Ok(trees)
}

/// Fit the Variable Selection strategy and return the updated-data
/// partition together with the selected feature set.
pub fn vs_blocking(
    panel: &PanelDataset,
    options: &VsOptions,
    subgroup_seed: Option<&Partition>,
    seed_value: u64,
) -> Result<(Partition, SelectedFeatures)> {
    let fit = VsFit::fit(panel, options, subgroup_seed, seed_value)?;
    let partition = fit.final_partition(panel)?;
    Ok((partition, fit.selected))
}
