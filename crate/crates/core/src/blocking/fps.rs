//! Future Prognostic Score blocking: learn `y_pre2 ≈ g(X, y_pre1)` with a
//! forest, score units with updated features `g(X, y_pre2)`, and cut the
//! score line into blocks with one of three allocators. Block counts for
//! the scaled and optimized allocators are tuned by a two-stage CV that
//! refits the score model inside every fold.

use serde::{Deserialize, Serialize};

use crate::blocking::allocate::{optimize_1d_with_model, scaled_with_model, sequential_with_model};
use crate::blocking::partition::{score_feature_matrix, Partition, ScoreModelRef};
use crate::cv::kfold_split;
use crate::dataset::{Matrix, PanelDataset, Period};
use crate::error::{Error, Result};
use crate::ml::{forest_fit, Forest, ForestConfig};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocator {
    /// Consecutive groups of `c_B` in score order.
    Sequential,
    /// A CV-chosen number of roughly equal blocks.
    Scaled,
    /// CV-chosen block count with coordinate-descent cut placement.
    Optimized,
}

#[derive(Clone, Debug)]
pub struct FpsOptions {
    pub c_b: usize,
    pub forest: ForestConfig,
    pub cv_folds: usize,
}

impl Default for FpsOptions {
    fn default() -> Self {
        FpsOptions {
            c_b: 4,
            forest: ForestConfig::default(),
            cv_folds: 5,
        }
    }
}

/// Prognostic scores with the model that produced them.
#[derive(Clone, Debug)]
pub struct PrognosticScores {
    pub scores: Vec<f64>,
    pub model: Forest,
}

/// `[X, Z_era, y_era]` rows for the score model.
fn score_features(panel: &PanelDataset, units: &[usize], period: Period) -> Result<Matrix> {
    let y = panel.outcome(period)?;
    let mut cols: Vec<Vec<f64>> = (0..panel.n_covariates())
        .map(|j| units.iter().map(|&i| panel.covariates.get(i, j)).collect())
        .collect();
    if let Some(z) = panel.time_varying_at(period)? {
        for j in 0..z.n_cols() {
            cols.push(units.iter().map(|&i| z.get(i, j)).collect());
        }
    }
    cols.push(units.iter().map(|&i| y[i]).collect());
    Ok(Matrix::from_columns(&cols))
}

/// Fit the one-step-ahead score model on `(X, y_pre1) → y_pre2` and score
/// every unit with updated features `(X, y_pre2)`.
pub fn fps_scores(panel: &PanelDataset, config: &ForestConfig, seed_value: u64) -> Result<PrognosticScores> {
    let n = panel.n_units();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let all: Vec<usize> = (0..n).collect();
    let y2 = panel.outcome(Period::Pre2)?;
    let x_train = score_features(panel, &all, Period::Pre1)?;
    let model = forest_fit(&x_train, &y2, config, seed::derive(seed_value, "fps.model", 0))?;
    let x_updated = score_features(panel, &all, Period::Pre2)?;
    let scores = model.predict(&x_updated);
    Ok(PrognosticScores { scores, model })
}

/// A fitted FPS design, reusable for out-of-sample scoring and for the
/// final updated-feature partition.
pub struct FpsFit {
    options: FpsOptions,
    pub allocator: Allocator,
    model: Forest,
    pub chosen_b: Option<usize>,
    training_partition: Partition,
    block_means_y2: Vec<f64>,
    model_ref: ScoreModelRef,
    y2_full: Vec<f64>,
}

fn allocate(
    scores: &[f64],
    y_target: &[f64],
    allocator: Allocator,
    b: Option<usize>,
    c_b: usize,
    model_ref: Option<ScoreModelRef>,
) -> Result<Partition> {
    match allocator {
        Allocator::Sequential => sequential_with_model(scores, c_b, model_ref),
        Allocator::Scaled => scaled_with_model(scores, b.unwrap_or(1), c_b, model_ref),
        Allocator::Optimized => {
            // tie runs can make a block count infeasible; back off toward
            // fewer blocks rather than fail
            let mut bb = b.unwrap_or(1);
            loop {
                match optimize_1d_with_model(scores, y_target, bb, c_b, model_ref.clone()) {
                    Ok(p) => return Ok(p),
                    Err(Error::BadBlockCount { .. }) if bb > 1 => bb -= 1,
                    Err(e) => return Err(e),
                }
            }
        }
    }
}

impl FpsFit {
    pub fn fit(
        panel: &PanelDataset,
        allocator: Allocator,
        options: &FpsOptions,
        seed_value: u64,
    ) -> Result<FpsFit> {
        let n = panel.n_units();
        if n < 2 * options.c_b {
            return Err(Error::TooFewUnits {
                need: 2 * options.c_b,
                have: n,
            });
        }
        let all: Vec<usize> = (0..n).collect();
        let y2 = panel.outcome(Period::Pre2)?;
        let x_train = score_features(panel, &all, Period::Pre1)?;
        let model = forest_fit(&x_train, &y2, &options.forest, seed::derive(seed_value, "fps.model", 0))?;
        let training_scores = model.predict(&x_train);

        let chosen_b = match allocator {
            Allocator::Sequential => None,
            Allocator::Scaled | Allocator::Optimized => Some(tune_block_count(
                panel,
                &y2,
                allocator,
                options,
                seed_value,
            )?),
        };

        let training_partition = allocate(
            &training_scores,
            &y2,
            allocator,
            chosen_b,
            options.c_b,
            None,
        )?;
        let members = training_partition.members();
        // block-level predictions: the mean outcome of each block's
        // training units, used when comparing strategies out of sample
        let block_means_y2: Vec<f64> = members
            .iter()
            .map(|m| m.iter().map(|&i| y2[i]).sum::<f64>() / m.len() as f64)
            .collect();

        let model_ref = ScoreModelRef {
            kind: "random_forest".into(),
            n_trees: options.forest.n_trees,
            seed: model.seed,
        };
        Ok(FpsFit {
            options: options.clone(),
            allocator,
            model,
            chosen_b,
            training_partition,
            block_means_y2,
            model_ref,
            y2_full: y2,
        })
    }

    pub fn c_b(&self) -> usize {
        self.options.c_b
    }

    /// Out-of-sample prediction of the pre2 outcome: score with
    /// training-era features, locate the score interval, return the block's
    /// training outcome mean.
    pub fn predict_training_era(&self, panel: &PanelDataset, units: &[usize]) -> Result<Vec<f64>> {
        let x = score_features(panel, units, Period::Pre1)?;
        let scores = self.model.predict(&x);
        let blocks = self
            .training_partition
            .assign(&score_feature_matrix(&scores))?;
        Ok(blocks.iter().map(|&b| self.block_means_y2[b]).collect())
    }

    /// Updated prognostic scores `g(X, y_pre2)` for all units.
    pub fn updated_scores(&self, panel: &PanelDataset) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..panel.n_units()).collect();
        let x = score_features(panel, &all, Period::Pre2)?;
        Ok(self.model.predict(&x))
    }

    /// Allocate blocks on the updated scores.
    pub fn final_partition(&self, panel: &PanelDataset) -> Result<Partition> {
        let scores = self.updated_scores(panel)?;
        allocate(
            &scores,
            &self.y2_full,
            self.allocator,
            self.chosen_b,
            self.options.c_b,
            Some(self.model_ref.clone()),
        )
    }
}

/// Two-stage CV for the block count: each fold refits the score model,
/// partitions the training scores for every candidate `b`, predicts the
/// held-out outcome by the block's mean training score, and the `b` with
/// the lowest pooled MSPE wins (ties to fewer blocks).
fn tune_block_count(
    panel: &PanelDataset,
    y2: &[f64],
    allocator: Allocator,
    options: &FpsOptions,
    seed_value: u64,
) -> Result<usize> {
    let n = panel.n_units();
    let plan = kfold_split(n, options.cv_folds.min(n), seed::derive(seed_value, "fps.bcv", 0))?;
    let min_train = (0..plan.k)
        .map(|f| plan.train_indices(f).len())
        .min()
        .unwrap_or(n);
    let b_max = (min_train / options.c_b).max(1);

    let mut pooled = vec![0.0f64; b_max + 1];
    let mut feasible = vec![true; b_max + 1];
    for fold in 0..plan.k {
        let train = plan.train_indices(fold);
        let test = plan.fold_indices(fold);
        let x_train = score_features(panel, &train, Period::Pre1)?;
        let y_train: Vec<f64> = train.iter().map(|&i| y2[i]).collect();
        let model = forest_fit(
            &x_train,
            &y_train,
            &options.forest,
            seed::derive(seed_value, "fps.bcv.model", fold as u64),
        )?;
        let s_train = model.predict(&x_train);
        let x_test = score_features(panel, &test, Period::Pre1)?;
        let s_test = model.predict(&x_test);

        for b in 1..=b_max {
            if !feasible[b] {
                continue;
            }
            let partition = match allocator {
                Allocator::Scaled => scaled_with_model(&s_train, b, options.c_b, None),
                Allocator::Optimized => optimize_1d_with_model(&s_train, &y_train, b, options.c_b, None),
                Allocator::Sequential => unreachable!(),
            };
            let partition = match partition {
                Ok(p) => p,
                Err(Error::BadBlockCount { .. }) => {
                    feasible[b] = false;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let members = partition.members();
            let mean_scores: Vec<f64> = members
                .iter()
                .map(|m| m.iter().map(|&i| s_train[i]).sum::<f64>() / m.len() as f64)
                .collect();
            let blocks = partition.assign(&score_feature_matrix(&s_test))?;
            for (pos, &i) in test.iter().enumerate() {
                let err = y2[i] - mean_scores[blocks[pos]];
                pooled[b] += err * err;
            }
        }
    }

    let mut best = None::<(f64, usize)>;
    for b in 1..=b_max {
        if !feasible[b] {
            continue;
        }
        let mspe = pooled[b] / n as f64;
        if best.is_none() || mspe < best.unwrap().0 {
            best = Some((mspe, b));
        }
    }
    best.map(|(_, b)| b).ok_or_else(|| Error::Internal("no feasible block count".into()))
}

/// Fit the FPS strategy and return the updated-score partition.
pub fn fps_blocking(
    panel: &PanelDataset,
    allocator: Allocator,
    options: &FpsOptions,
    seed_value: u64,
) -> Result<Partition> {
    FpsFit::fit(panel, allocator, options, seed_value)?.final_partition(panel)
}
