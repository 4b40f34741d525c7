//! Turning a design into a concrete treatment assignment: within-block
//! randomization with alternating misfits, pairwise matching, and min-max /
//! big-stick rerandomization.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocking::{Allocator, FpsFit, FpsOptions, Partition, VsFit, VsOptions};
use crate::dataset::{Matrix, PanelDataset};
use crate::error::{Error, Result};
use crate::estimation::two_sample_t;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerandMode {
    /// Keep the best of R complete randomizations.
    MinMax { draws: usize },
    /// Redraw until no balance variable is significant at `alpha`.
    BigStick { alpha: f64, max_draws: usize },
}

impl RerandMode {
    pub fn min_max() -> Self {
        RerandMode::MinMax { draws: 1000 }
    }

    pub fn big_stick() -> Self {
        RerandMode::BigStick {
            alpha: 0.05,
            max_draws: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AssignmentMethod {
    Complete,
    Blocked { n_blocks: usize },
    Paired { n_pairs: usize },
    Rerandomized {
        mode: RerandMode,
        chosen_draw: usize,
        converged: bool,
    },
}

/// A complete unit→arm map with misfit bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreatmentAssignment {
    pub treated: Vec<bool>,
    pub misfit: Vec<bool>,
    /// Block or pair id per unit; `None` for units outside any group
    /// (complete/rerandomized assignments, or a pairing holdout).
    pub group_of: Vec<Option<usize>>,
    pub method: AssignmentMethod,
    pub seed: u64,
}

impl TreatmentAssignment {
    pub fn n_units(&self) -> usize {
        self.treated.len()
    }

    pub fn n_treated(&self) -> usize {
        self.treated.iter().filter(|&&t| t).count()
    }

    /// Dense group ids for estimation with dummies; `None` if any unit is
    /// ungrouped.
    pub fn group_ids(&self) -> Option<Vec<usize>> {
        self.group_of.iter().copied().collect()
    }
}

/// Complete randomization: ⌊n/2⌋ treated by a seeded shuffle.
pub fn complete_randomization(n: usize, seed_value: u64) -> TreatmentAssignment {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed_value, "assign.complete", 0));
    let mut treated = vec![false; n];
    for &u in &order[..n / 2] {
        treated[u] = true;
    }
    TreatmentAssignment {
        treated,
        misfit: vec![false; n],
        group_of: vec![None; n],
        method: AssignmentMethod::Complete,
        seed: seed_value,
    }
}

/// Within each block, half the units (a seeded shuffle) get each arm. Odd
/// blocks flag one leftover unit as a misfit; iterating blocks in id order,
/// misfits receive strictly alternating arms, the first decided by one coin
/// from the seed.
pub fn assign_within_blocks(partition: &Partition, seed_value: u64) -> TreatmentAssignment {
    let n = partition.n_units();
    let mut treated = vec![false; n];
    let mut misfit = vec![false; n];
    let mut group_of = vec![None; n];
    let coin: bool = seed::rng(seed_value, "assign.coin", 0).random();
    let mut misfit_count = 0usize;
    for (b, members) in partition.members().into_iter().enumerate() {
        let mut order = members;
        order.shuffle(&mut seed::rng(seed_value, "assign.block", b as u64));
        let half = order.len() / 2;
        for &u in &order[..half] {
            treated[u] = true;
        }
        for &u in &order {
            group_of[u] = Some(b);
        }
        if order.len() % 2 == 1 {
            let u = *order.last().unwrap();
            misfit[u] = true;
            treated[u] = coin ^ (misfit_count % 2 == 1);
            misfit_count += 1;
        }
    }
    TreatmentAssignment {
        treated,
        misfit,
        group_of,
        method: AssignmentMethod::Blocked {
            n_blocks: partition.n_blocks,
        },
        seed: seed_value,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OddPolicy {
    /// Refuse to pair an odd number of units.
    Error,
    /// Hold one random unit out of the pairing, flag it as a misfit, and
    /// give it a random arm.
    RandomHoldout,
}

/// What pairs are matched on.
pub enum PairCriterion {
    /// Euclidean distance with each dimension scaled by its importance
    /// weight.
    Features { x: Matrix, weights: Vec<f64> },
    /// Consecutive pairs in score order.
    Scores(Vec<f64>),
}

/// Divide units into pairs and randomize one treated unit per pair.
pub fn pair_units(
    criterion: &PairCriterion,
    odd_policy: OddPolicy,
    seed_value: u64,
) -> Result<(Vec<(usize, usize)>, TreatmentAssignment)> {
    let n = match criterion {
        PairCriterion::Features { x, .. } => x.n_rows(),
        PairCriterion::Scores(s) => s.len(),
    };
    if n < 2 {
        return Err(Error::TooFewUnits { need: 2, have: n });
    }
    let mut holdout = None;
    let mut available: Vec<usize> = (0..n).collect();
    if n % 2 == 1 {
        match odd_policy {
            OddPolicy::Error => return Err(Error::OddN(n)),
            OddPolicy::RandomHoldout => {
                let pick = seed::rng(seed_value, "pair.holdout", 0).random_range(0..n);
                holdout = Some(pick);
                available.retain(|&u| u != pick);
            }
        }
    }

    let pairs: Vec<(usize, usize)> = match criterion {
        PairCriterion::Scores(scores) => {
            let mut order = available.clone();
            order.sort_by(|&a, &b| {
                scores[a]
                    .partial_cmp(&scores[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            order.chunks(2).map(|c| (c[0], c[1])).collect()
        }
        PairCriterion::Features { x, weights } => {
            let dist2 = |a: usize, b: usize| -> f64 {
                x.row(a)
                    .iter()
                    .zip(x.row(b))
                    .zip(weights)
                    .map(|((u, v), w)| {
                        let d = w * (u - v);
                        d * d
                    })
                    .sum()
            };
            let mut order = available.clone();
            order.shuffle(&mut seed::rng(seed_value, "pair.order", 0));
            let mut used = vec![false; n];
            if let Some(h) = holdout {
                used[h] = true;
            }
            let mut pairs = Vec::with_capacity(available.len() / 2);
            for &u in &order {
                if used[u] {
                    continue;
                }
                used[u] = true;
                let mut best: Option<(f64, usize)> = None;
                for &v in &available {
                    if used[v] {
                        continue;
                    }
                    let d = dist2(u, v);
                    if best.is_none() || d < best.unwrap().0 {
                        best = Some((d, v));
                    }
                }
                let (_, v) = best.ok_or_else(|| Error::Internal("pairing ran out of units".into()))?;
                used[v] = true;
                pairs.push((u, v));
            }
            pairs
        }
    };

    let mut treated = vec![false; n];
    let mut misfit = vec![false; n];
    let mut group_of = vec![None; n];
    for (pid, &(a, b)) in pairs.iter().enumerate() {
        let first: bool = seed::rng(seed_value, "pair.arm", pid as u64).random();
        treated[a] = first;
        treated[b] = !first;
        group_of[a] = Some(pid);
        group_of[b] = Some(pid);
    }
    if let Some(h) = holdout {
        misfit[h] = true;
        treated[h] = seed::rng(seed_value, "pair.holdout.arm", 0).random();
    }
    let assignment = TreatmentAssignment {
        treated,
        misfit,
        group_of,
        method: AssignmentMethod::Paired {
            n_pairs: pairs.len(),
        },
        seed: seed_value,
    };
    Ok((pairs, assignment))
}

/// Balance criterion for rerandomization.
pub enum BalanceCriterion {
    /// Per-variable t-statistics, the max weighted by importance.
    Variables { x: Matrix, weights: Vec<f64> },
    /// A single prognostic-score t-statistic.
    Score { scores: Vec<f64> },
}

impl BalanceCriterion {
    fn columns(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        match self {
            BalanceCriterion::Variables { x, weights } => {
                ((0..x.n_cols()).map(|j| x.column(j)).collect(), weights.clone())
            }
            BalanceCriterion::Score { scores } => (vec![scores.clone()], vec![1.0]),
        }
    }

    pub fn n_units(&self) -> usize {
        match self {
            BalanceCriterion::Variables { x, .. } => x.n_rows(),
            BalanceCriterion::Score { scores } => scores.len(),
        }
    }
}

/// Per-draw balance statistics kept for audit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BalanceStats {
    /// draws × variables t-statistics (absolute values; +∞ marks a
    /// disqualified zero-variance draw).
    pub theta: Matrix,
    /// max_k w_k·|θ_rk| per draw.
    pub weighted_max: Vec<f64>,
}

/// |t| per balance variable for one draw; zero-variance columns score 0
/// when arms agree and +∞ otherwise.
fn draw_thetas(columns: &[Vec<f64>], d: &[bool]) -> Vec<f64> {
    columns
        .iter()
        .map(|col| match two_sample_t(col, d) {
            Ok(t) => t.abs(),
            Err(Error::ZeroVariance) => f64::INFINITY,
            Err(_) => f64::INFINITY,
        })
        .collect()
}

fn weighted_max(thetas: &[f64], weights: &[f64]) -> f64 {
    thetas
        .iter()
        .zip(weights)
        .map(|(t, w)| {
            if *t == 0.0 {
                0.0
            } else {
                w * t
            }
        })
        .fold(0.0, f64::max)
}

/// Rerandomize: draw complete randomizations and keep the one meeting the
/// balance rule. Returns the chosen assignment plus the audit statistics of
/// every evaluated draw.
pub fn rerandomize(
    criterion: &BalanceCriterion,
    mode: RerandMode,
    seed_value: u64,
) -> Result<(TreatmentAssignment, BalanceStats)> {
    let n = criterion.n_units();
    if n < 2 {
        return Err(Error::TooFewUnits { need: 2, have: n });
    }
    let (columns, weights) = criterion.columns();
    let k = columns.len();

    let evaluate = |r: usize| -> (Vec<bool>, Vec<f64>, f64) {
        let draw = complete_randomization(n, seed::derive(seed_value, "rerand.draw", r as u64));
        let thetas = draw_thetas(&columns, &draw.treated);
        let wmax = weighted_max(&thetas, &weights);
        (draw.treated, thetas, wmax)
    };

    let (all, chosen, converged) = match mode {
        RerandMode::MinMax { draws } => {
            if draws == 0 {
                return Err(Error::Internal("min-max needs at least one draw".into()));
            }
            let all: Vec<(Vec<bool>, Vec<f64>, f64)> =
                (0..draws).into_par_iter().map(evaluate).collect();
            let mut best = 0usize;
            for (r, entry) in all.iter().enumerate() {
                if entry.2 < all[best].2 {
                    best = r;
                }
            }
            (all, best, true)
        }
        RerandMode::BigStick { alpha, max_draws } => {
            if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
                return Err(Error::Internal(format!("alpha {alpha} outside (0,1)")));
            }
            let z_crit = crate::linalg::normal_quantile(1.0 - alpha / 2.0);
            let mut all: Vec<(Vec<bool>, Vec<f64>, f64)> = Vec::new();
            let mut best = 0usize;
            let mut converged = false;
            for r in 0..max_draws.max(1) {
                let entry = evaluate(r);
                let ok = entry.1.iter().all(|t| *t < z_crit);
                if !all.is_empty() && entry.2 < all[best].2 {
                    best = r;
                }
                all.push(entry);
                if ok {
                    best = r;
                    converged = true;
                    break;
                }
            }
            (all, best, converged)
        }
    };

    let mut theta = Matrix::zeros(all.len(), k);
    let mut wmaxes = Vec::with_capacity(all.len());
    for (r, (_, thetas, wm)) in all.iter().enumerate() {
        for (j, t) in thetas.iter().enumerate() {
            theta.set(r, j, *t);
        }
        wmaxes.push(*wm);
    }
    let assignment = TreatmentAssignment {
        treated: all[chosen].0.clone(),
        misfit: vec![false; n],
        group_of: vec![None; n],
        method: AssignmentMethod::Rerandomized {
            mode,
            chosen_draw: chosen,
            converged,
        },
        seed: seed_value,
    };
    Ok((
        assignment,
        BalanceStats {
            theta,
            weighted_max: wmaxes,
        },
    ))
}

/// Match space for the variable-selection flavors of pairing and
/// rerandomization: standardized updated selected features with their
/// importance weights (all candidates, unit weights, when selection is
/// empty).
pub fn vs_balance_criterion(
    panel: &PanelDataset,
    options: &VsOptions,
    seed_value: u64,
) -> Result<BalanceCriterion> {
    let fit = VsFit::fit(panel, options, None, seed_value)?;
    let (x, weights) = fit.match_space(panel)?;
    Ok(BalanceCriterion::Variables { x, weights })
}

/// Score-based criterion from the future-prognostic-score model.
pub fn fps_balance_criterion(
    panel: &PanelDataset,
    options: &FpsOptions,
    seed_value: u64,
) -> Result<BalanceCriterion> {
    let fit = FpsFit::fit(panel, Allocator::Sequential, options, seed_value)?;
    Ok(BalanceCriterion::Score {
        scores: fit.updated_scores(panel)?,
    })
}

/// Pairwise matching with the VS feature-distance criterion.
pub fn pairwise_match_vs(
    panel: &PanelDataset,
    options: &VsOptions,
    odd_policy: OddPolicy,
    seed_value: u64,
) -> Result<(Vec<(usize, usize)>, TreatmentAssignment)> {
    let fit = VsFit::fit(panel, options, None, seed_value)?;
    let (x, weights) = fit.match_space(panel)?;
    pair_units(&PairCriterion::Features { x, weights }, odd_policy, seed_value)
}

/// Pairwise matching in prognostic-score order.
pub fn pairwise_match_fps(
    panel: &PanelDataset,
    options: &FpsOptions,
    odd_policy: OddPolicy,
    seed_value: u64,
) -> Result<(Vec<(usize, usize)>, TreatmentAssignment)> {
    let fit = FpsFit::fit(panel, Allocator::Sequential, options, seed_value)?;
    let scores = fit.updated_scores(panel)?;
    pair_units(&PairCriterion::Scores(scores), odd_policy, seed_value)
}
