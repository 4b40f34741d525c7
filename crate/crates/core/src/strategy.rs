//! Choosing between design strategies: pre3 holdout scoring, repeated
//! 2-fold cross-validation, and the simulated MSE/SE trade-off.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::assignment::{assign_within_blocks, rerandomize, BalanceCriterion, RerandMode};
use crate::blocking::{
    Allocator, FpsFit, FpsOptions, Partition, SelectedFeatures, VsFit, VsOptions,
};
use crate::cv::kfold_split;
use crate::dataset::{PanelDataset, Period};
use crate::error::{Error, Result};
use crate::estimation::ols_block_estimate;
use crate::seed;
use crate::sim::{FittedSimDesign, SimDesign};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreCriterion {
    Pre3Mspe,
    CvMspe,
    Tradeoff,
    Pre3Balance,
}

/// One strategy's score under a selection criterion; lower is preferred.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyScore {
    pub strategy: String,
    pub criterion: ScoreCriterion,
    pub value: f64,
    /// (avg placebo MSE, avg placebo SE), present only for the trade-off
    /// criterion.
    pub components: Option<(f64, f64)>,
    pub n_repeats: usize,
}

/// CSV report: strategy, criterion, score, rank.
pub fn comparison_report_csv(scores: &[StrategyScore]) -> String {
    let mut out = String::from("strategy,criterion,score,rank\n");
    for (rank, s) in scores.iter().enumerate() {
        out.push_str(&format!(
            "{},{:?},{},{}\n",
            s.strategy,
            s.criterion,
            s.value,
            rank + 1
        ));
    }
    out
}

/// Markdown table mirroring [`comparison_report_csv`].
pub fn comparison_report_markdown(scores: &[StrategyScore]) -> String {
    let mut out = String::from("| strategy | criterion | score | rank |\n|---|---|---|---|\n");
    for (rank, s) in scores.iter().enumerate() {
        out.push_str(&format!(
            "| {} | {:?} | {:.6} | {} |\n",
            s.strategy,
            s.criterion,
            s.value,
            rank + 1
        ));
    }
    out
}

/// A blocking strategy that can be refit inside resampling loops.
pub trait DesignStrategy: Sync {
    fn name(&self) -> String;
    fn c_b(&self) -> usize;
    fn fit(&self, panel: &PanelDataset, seed_value: u64) -> Result<FittedStrategy>;
}

/// A fitted strategy: scoreable out of sample on training-era features,
/// and able to emit the final updated-feature partition.
pub enum FittedStrategy {
    Vs(VsFit),
    Fps(FpsFit),
}

impl FittedStrategy {
    pub fn predict_training_era(&self, panel: &PanelDataset, units: &[usize]) -> Result<Vec<f64>> {
        match self {
            FittedStrategy::Vs(f) => f.predict_training_era(panel, units),
            FittedStrategy::Fps(f) => f.predict_training_era(panel, units),
        }
    }

    pub fn final_partition(&self, panel: &PanelDataset) -> Result<Partition> {
        match self {
            FittedStrategy::Vs(f) => f.final_partition(panel),
            FittedStrategy::Fps(f) => f.final_partition(panel),
        }
    }

    pub fn selected_features(&self) -> Option<&SelectedFeatures> {
        match self {
            FittedStrategy::Vs(f) => Some(&f.selected),
            FittedStrategy::Fps(_) => None,
        }
    }
}

/// Variable Selection blocking as a refittable strategy.
#[derive(Clone)]
pub struct VsStrategy {
    pub options: VsOptions,
}

impl DesignStrategy for VsStrategy {
    fn name(&self) -> String {
        match self.options.feature_selection {
            crate::blocking::FeatureSelection::Off => "vs-cart".into(),
            crate::blocking::FeatureSelection::On => "vs-lasso-cart".into(),
            crate::blocking::FeatureSelection::Auto => "vs".into(),
        }
    }

    fn c_b(&self) -> usize {
        self.options.c_b
    }

    fn fit(&self, panel: &PanelDataset, seed_value: u64) -> Result<FittedStrategy> {
        Ok(FittedStrategy::Vs(VsFit::fit(panel, &self.options, None, seed_value)?))
    }
}

/// Future-prognostic-score blocking as a refittable strategy.
#[derive(Clone)]
pub struct FpsStrategy {
    pub allocator: Allocator,
    pub options: FpsOptions,
}

impl DesignStrategy for FpsStrategy {
    fn name(&self) -> String {
        match self.allocator {
            Allocator::Sequential => "fps-sequential".into(),
            Allocator::Scaled => "fps-scaled".into(),
            Allocator::Optimized => "fps-optimized".into(),
        }
    }

    fn c_b(&self) -> usize {
        self.options.c_b
    }

    fn fit(&self, panel: &PanelDataset, seed_value: u64) -> Result<FittedStrategy> {
        Ok(FittedStrategy::Fps(FpsFit::fit(
            panel,
            self.allocator,
            &self.options,
            seed_value,
        )?))
    }
}

/// Score candidate partitions by K-fold CV MSPE of block-mean predictions
/// of the pre3 outcome (means always estimated on training folds), ranked
/// ascending; ties break toward fewer blocks.
pub fn compare_on_pre3(
    partitions: &[(String, &Partition)],
    panel: &PanelDataset,
    k_folds: usize,
    seed_value: u64,
) -> Result<Vec<StrategyScore>> {
    if !panel.has_period(Period::Pre3) {
        return Err(Error::MissingPre3);
    }
    let y3 = panel.outcome(Period::Pre3)?;
    let n = panel.n_units();
    let plan = kfold_split(n, k_folds.min(n), seed::derive(seed_value, "pre3.folds", 0))?;

    let mut scored: Vec<(StrategyScore, usize)> = Vec::with_capacity(partitions.len());
    for (name, partition) in partitions {
        if partition.n_units() != n {
            return Err(Error::Internal(format!(
                "partition `{name}` covers {} units, panel has {n}",
                partition.n_units()
            )));
        }
        let mut pooled = 0.0;
        for fold in 0..plan.k {
            let train = plan.train_indices(fold);
            let mut sums = vec![0.0; partition.n_blocks];
            let mut counts = vec![0usize; partition.n_blocks];
            for &i in &train {
                sums[partition.block_of[i]] += y3[i];
                counts[partition.block_of[i]] += 1;
            }
            let overall = train.iter().map(|&i| y3[i]).sum::<f64>() / train.len() as f64;
            for i in plan.fold_indices(fold) {
                let b = partition.block_of[i];
                let pred = if counts[b] > 0 {
                    sums[b] / counts[b] as f64
                } else {
                    overall
                };
                let err = y3[i] - pred;
                pooled += err * err;
            }
        }
        scored.push((
            StrategyScore {
                strategy: name.clone(),
                criterion: ScoreCriterion::Pre3Mspe,
                value: pooled / n as f64,
                components: None,
                n_repeats: plan.k,
            },
            partition.n_blocks,
        ));
    }
    scored.sort_by(|a, b| {
        a.0.value
            .partial_cmp(&b.0.value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.0.strategy.cmp(&b.0.strategy))
    });
    Ok(scored.into_iter().map(|(s, _)| s).collect())
}

/// Compare strategy builders without a pre3 period: repeated 2-fold CV,
/// refitting the whole pipeline on each half and scoring its block-mean
/// model on the held-out half's pre2 outcome.
pub fn compare_by_cv(
    strategies: &[&dyn DesignStrategy],
    panel: &PanelDataset,
    n_repeats: usize,
    seed_value: u64,
) -> Result<Vec<StrategyScore>> {
    if strategies.is_empty() || n_repeats == 0 {
        return Err(Error::Internal("nothing to compare".into()));
    }
    let n = panel.n_units();
    let need = strategies.iter().map(|s| 2 * s.c_b()).max().unwrap();
    if n / 2 < need {
        return Err(Error::TooSmallForSplit { need });
    }
    let y2 = panel.outcome(Period::Pre2)?;

    let mut totals = vec![0.0f64; strategies.len()];
    for rep in 0..n_repeats {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed_value, "cv2.split", rep as u64));
        let mut half_a: Vec<usize> = order[..n / 2].to_vec();
        let mut half_b: Vec<usize> = order[n / 2..].to_vec();
        half_a.sort_unstable();
        half_b.sort_unstable();

        for (si, strategy) in strategies.iter().enumerate() {
            let mut pooled = 0.0;
            let mut count = 0usize;
            for (fold, (train, test)) in [(&half_a, &half_b), (&half_b, &half_a)]
                .into_iter()
                .enumerate()
            {
                // one seed per repeat × fold, shared by every strategy:
                // identical builders score identically, and common random
                // numbers tighten the comparison
                let fit_seed = seed::derive(seed_value, "cv2.fit", (rep * 2 + fold) as u64);
                let sub = panel.subset(train);
                let fitted = strategy.fit(&sub, fit_seed)?;
                let preds = fitted.predict_training_era(panel, test)?;
                for (pos, &i) in test.iter().enumerate() {
                    let err = y2[i] - preds[pos];
                    pooled += err * err;
                }
                count += test.len();
            }
            totals[si] += pooled / count as f64;
        }
    }

    let mut scores: Vec<StrategyScore> = strategies
        .iter()
        .zip(&totals)
        .map(|(s, t)| StrategyScore {
            strategy: s.name(),
            criterion: ScoreCriterion::CvMspe,
            value: t / n_repeats as f64,
            components: None,
            n_repeats,
        })
        .collect();
    scores.sort_by(|a, b| {
        a.value
            .partial_cmp(&b.value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.strategy.cmp(&b.strategy))
    });
    Ok(scores)
}

/// Pick among candidate partitions by simulating S placebo assignments on
/// the pre3 outcome and scoring
/// `weight·(MSE/MSE_baseline) + (1−weight)·(SE/SE_baseline)` against the
/// complete-randomization baseline. Returns the ranked scores and the index
/// of the chosen candidate.
pub fn tradeoff_select_pre3(
    candidates: &[(String, &Partition)],
    panel: &PanelDataset,
    s_draws: usize,
    weight: f64,
    seed_value: u64,
) -> Result<(Vec<StrategyScore>, usize)> {
    if !panel.has_period(Period::Pre3) {
        return Err(Error::MissingPre3);
    }
    if candidates.is_empty() || s_draws == 0 {
        return Err(Error::Internal("nothing to select".into()));
    }
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::Internal(format!("weight {weight} outside [0,1]")));
    }
    let y3 = panel.outcome(Period::Pre3)?;
    let n = panel.n_units();

    let placebo = |partition: &Partition| -> Result<(f64, f64)> {
        let mut mse = 0.0;
        let mut se = 0.0;
        for s in 0..s_draws {
            // shared derived seeds: a single-block candidate reproduces the
            // baseline draws exactly
            let a = assign_within_blocks(partition, seed::derive(seed_value, "tradeoff.draw", s as u64));
            let blocks = if partition.n_blocks > 1 {
                Some(&partition.block_of[..])
            } else {
                None
            };
            let est = ols_block_estimate(&y3, &a.treated, blocks)?;
            mse += est.beta_hat * est.beta_hat;
            se += est.se;
        }
        Ok((mse / s_draws as f64, se / s_draws as f64))
    };

    let baseline = Partition::single_block(n);
    let (base_mse, base_se) = placebo(&baseline)?;

    let mut scored: Vec<(StrategyScore, usize)> = Vec::with_capacity(candidates.len());
    for (name, partition) in candidates {
        let (mse, se) = placebo(partition)?;
        scored.push((
            StrategyScore {
                strategy: name.clone(),
                criterion: ScoreCriterion::Tradeoff,
                value: weight * (mse / base_mse) + (1.0 - weight) * (se / base_se),
                components: Some((mse, se)),
                n_repeats: s_draws,
            },
            partition.n_blocks,
        ));
    }
    let chosen = scored
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.0.value
                .partial_cmp(&b.0.value)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        })
        .map(|(i, _)| i)
        .unwrap();
    Ok((scored.into_iter().map(|(s, _)| s).collect(), chosen))
}

/// Compare rerandomization criteria by the average absolute difference in
/// pre3 means between the arms over S rerandomized draws.
pub fn compare_rerandomization_on_pre3(
    criteria: &[(String, BalanceCriterion)],
    panel: &PanelDataset,
    mode: RerandMode,
    s_draws: usize,
    seed_value: u64,
) -> Result<Vec<StrategyScore>> {
    if !panel.has_period(Period::Pre3) {
        return Err(Error::MissingPre3);
    }
    let y3 = panel.outcome(Period::Pre3)?;
    let mut scores = Vec::with_capacity(criteria.len());
    for (ci, (name, criterion)) in criteria.iter().enumerate() {
        let mut total = 0.0;
        for s in 0..s_draws {
            let draw_seed = seed::derive(seed_value, "rerand.compare", (ci * s_draws + s) as u64);
            let (a, _) = rerandomize(criterion, mode, draw_seed)?;
            let mut t_sum = 0.0;
            let mut t_n = 0usize;
            let mut c_sum = 0.0;
            let mut c_n = 0usize;
            for (i, &t) in a.treated.iter().enumerate() {
                if t {
                    t_sum += y3[i];
                    t_n += 1;
                } else {
                    c_sum += y3[i];
                    c_n += 1;
                }
            }
            total += (t_sum / t_n as f64 - c_sum / c_n as f64).abs();
        }
        scores.push(StrategyScore {
            strategy: name.clone(),
            criterion: ScoreCriterion::Pre3Balance,
            value: total / s_draws as f64,
            components: None,
            n_repeats: s_draws,
        });
    }
    scores.sort_by(|a, b| {
        a.value
            .partial_cmp(&b.value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.strategy.cmp(&b.strategy))
    });
    Ok(scores)
}

// --- placebo-harness adapters -------------------------------------------

/// Blocked design backed by any [`DesignStrategy`].
pub struct BlockedDesign<S: DesignStrategy> {
    pub strategy: S,
}

impl<S: DesignStrategy> SimDesign for BlockedDesign<S> {
    fn name(&self) -> String {
        self.strategy.name()
    }

    fn required_pre_periods(&self) -> usize {
        2
    }

    fn fit(&self, panel: &PanelDataset, seed_value: u64) -> Result<FittedSimDesign> {
        let fitted = self.strategy.fit(panel, seed_value)?;
        Ok(FittedSimDesign::Blocked(fitted.final_partition(panel)?))
    }
}

/// Pairwise-matching design for the harness.
pub struct PairedDesign {
    pub vs: Option<VsOptions>,
    pub fps: Option<FpsOptions>,
}

impl SimDesign for PairedDesign {
    fn name(&self) -> String {
        if self.vs.is_some() {
            "paired-vs".into()
        } else {
            "paired-fps".into()
        }
    }

    fn required_pre_periods(&self) -> usize {
        2
    }

    fn fit(&self, panel: &PanelDataset, seed_value: u64) -> Result<FittedSimDesign> {
        let (pairs, _) = if let Some(options) = &self.vs {
            crate::assignment::pairwise_match_vs(
                panel,
                options,
                crate::assignment::OddPolicy::RandomHoldout,
                seed_value,
            )?
        } else {
            crate::assignment::pairwise_match_fps(
                panel,
                self.fps.as_ref().unwrap_or(&FpsOptions::default()),
                crate::assignment::OddPolicy::RandomHoldout,
                seed_value,
            )?
        };
        Ok(FittedSimDesign::Paired {
            pairs,
            n: panel.n_units(),
        })
    }
}

/// Rerandomized design for the harness.
pub struct RerandomizedDesign {
    pub vs: Option<VsOptions>,
    pub fps: Option<FpsOptions>,
    pub mode: RerandMode,
}

impl SimDesign for RerandomizedDesign {
    fn name(&self) -> String {
        if self.vs.is_some() {
            "rerandomized-vs".into()
        } else {
            "rerandomized-fps".into()
        }
    }

    fn required_pre_periods(&self) -> usize {
        2
    }

    fn fit(&self, panel: &PanelDataset, seed_value: u64) -> Result<FittedSimDesign> {
        let criterion = if let Some(options) = &self.vs {
            crate::assignment::vs_balance_criterion(panel, options, seed_value)?
        } else {
            crate::assignment::fps_balance_criterion(
                panel,
                self.fps.as_ref().unwrap_or(&FpsOptions::default()),
                seed_value,
            )?
        };
        Ok(FittedSimDesign::Rerandomize {
            criterion,
            mode: self.mode,
        })
    }
}

/// A fixed user-supplied grid (the manual comparator): per-variable edges
/// over named covariates, undersized cells merged along the last variable.
pub struct ManualGridDesign {
    pub name: String,
    pub features: Vec<String>,
    pub edges: Vec<Vec<f64>>,
    pub c_b: usize,
}

impl SimDesign for ManualGridDesign {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn required_pre_periods(&self) -> usize {
        0
    }

    fn fit(&self, panel: &PanelDataset, _seed: u64) -> Result<FittedSimDesign> {
        Ok(FittedSimDesign::Blocked(manual_grid_partition(
            panel,
            &self.features,
            &self.edges,
            self.c_b,
        )?))
    }
}

/// Build a partition from explicit per-variable cut points, merging any
/// cell below `c_B` with a neighbor.
pub fn manual_grid_partition(
    panel: &PanelDataset,
    features: &[String],
    edges: &[Vec<f64>],
    c_b: usize,
) -> Result<Partition> {
    if features.len() != edges.len() || features.is_empty() {
        return Err(Error::BadSchema(
            "manual grid needs one edge list per feature".into(),
        ));
    }
    let cols: Vec<usize> = features
        .iter()
        .map(|f| {
            panel
                .covariate_names
                .iter()
                .position(|c| c == f)
                .ok_or_else(|| Error::SchemaMismatch(f.clone()))
        })
        .collect::<Result<_>>()?;
    let data = panel.covariates.columns_subset(&cols);
    let fm = crate::dataset::FeatureMatrix::new(features.to_vec(), data);
    crate::blocking::merged_grid_partition(&fm, edges, c_b)
}
