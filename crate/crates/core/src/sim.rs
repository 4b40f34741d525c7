//! Placebo Monte Carlo harness: generate synthetic panels, fit candidate
//! designs on pre-period data only, redraw fake assignments many times, and
//! report the coefficient MSE and mean standard error per method.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{
    assign_within_blocks, complete_randomization, rerandomize, BalanceCriterion, RerandMode,
    TreatmentAssignment,
};
use crate::blocking::Partition;
use crate::dataset::{Matrix, PanelDataset, Period};
use crate::error::{Error, Result};
use crate::estimation::ols_block_estimate;
use crate::seed;

/// Per-period outcome function h_t.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeFn {
    /// Σ c_k·x_k
    Linear { coefs: Vec<f64> },
    /// Σ c_k·1[x_k > t_k]
    Step { coefs: Vec<f64>, thresholds: Vec<f64> },
    /// Σ c_k·x_k², the classic misspecification trap for linear scores
    Quadratic { coefs: Vec<f64> },
}

impl OutcomeFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            OutcomeFn::Linear { coefs } => x.iter().zip(coefs).map(|(v, c)| v * c).sum(),
            OutcomeFn::Step { coefs, thresholds } => x
                .iter()
                .zip(coefs)
                .zip(thresholds)
                .map(|((v, c), t)| if v > t { *c } else { 0.0 })
                .sum(),
            OutcomeFn::Quadratic { coefs } => x.iter().zip(coefs).map(|(v, c)| v * v * c).sum(),
        }
    }

    fn arity(&self) -> usize {
        match self {
            OutcomeFn::Linear { coefs } | OutcomeFn::Quadratic { coefs } => coefs.len(),
            OutcomeFn::Step { coefs, thresholds } => coefs.len().min(thresholds.len()),
        }
    }
}

/// Synthetic data generating process `y_it = h_t(X_i) + u_it` with AR(1)
/// errors `u_it = ρ·u_{i,t−1} + ε_it` and a true (placebo) treatment effect
/// of zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDgpSpec {
    pub n: usize,
    pub k: usize,
    /// One outcome function per period; 2–4 periods map onto
    /// pre1, pre2, pre3, post.
    pub h: Vec<OutcomeFn>,
    /// AR coefficient ρ on the unit error, |ρ| < 1.
    pub persistence: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SyntheticDgpSpec {
    pub fn n_periods(&self) -> usize {
        self.h.len()
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::BadSpec("n must be positive".into()));
        }
        if !(2..=4).contains(&self.h.len()) {
            return Err(Error::BadSpec(format!(
                "need 2–4 outcome periods, got {}",
                self.h.len()
            )));
        }
        if self.h.iter().any(|h| h.arity() != self.k) {
            return Err(Error::BadSpec(
                "every outcome function must cover all k covariates".into(),
            ));
        }
        if self.persistence.abs() >= 1.0 || !self.persistence.is_finite() {
            return Err(Error::BadSpec(format!(
                "persistence must lie in (−1, 1), got {}",
                self.persistence
            )));
        }
        if self.noise_sd < 0.0 || !self.noise_sd.is_finite() {
            return Err(Error::BadSpec("noise_sd must be nonnegative".into()));
        }
        Ok(())
    }

    fn periods(&self) -> Vec<Period> {
        match self.h.len() {
            2 => vec![Period::Pre1, Period::Pre2],
            3 => vec![Period::Pre1, Period::Pre2, Period::Pre3],
            _ => vec![Period::Pre1, Period::Pre2, Period::Pre3, Period::Post],
        }
    }
}

/// Deterministic synthetic panel: standard-normal covariates, per-period
/// outcome functions, stationary AR(1) unit errors.
pub fn generate_synthetic_panel(spec: &SyntheticDgpSpec) -> Result<PanelDataset> {
    spec.validate()?;
    let n = spec.n;
    let k = spec.k;
    let t = spec.n_periods();

    let mut rng_x = seed::rng(spec.seed, "dgp.x", 0);
    let mut covariates = Matrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            covariates.set(i, j, rng_x.sample::<f64, _>(StandardNormal));
        }
    }

    let rho = spec.persistence;
    let stationary_sd = if spec.noise_sd == 0.0 {
        0.0
    } else {
        spec.noise_sd / (1.0 - rho * rho).sqrt()
    };
    let mut rng_u = seed::rng(spec.seed, "dgp.u", 0);
    let mut outcomes = Matrix::zeros(n, t);
    for i in 0..n {
        let mut u = stationary_sd * rng_u.sample::<f64, _>(StandardNormal);
        for (p, h) in spec.h.iter().enumerate() {
            if p > 0 {
                u = rho * u + spec.noise_sd * rng_u.sample::<f64, _>(StandardNormal);
            }
            outcomes.set(i, p, h.eval(covariates.row(i)) + u);
        }
    }

    PanelDataset::new(
        (1..=n).map(|i| format!("u{i:05}")).collect(),
        outcomes,
        spec.periods(),
        covariates,
        (1..=k).map(|j| format!("x{j}")).collect(),
        None,
    )
}

/// A design procedure the placebo harness can evaluate. Fitting sees only
/// the design panel (evaluation period withheld); each replication then
/// redraws the randomization.
pub trait SimDesign: Sync {
    fn name(&self) -> String;
    /// Pre-periods the procedure must observe; checked against the panel
    /// after the evaluation period is withheld.
    fn required_pre_periods(&self) -> usize;
    fn fit(&self, panel: &PanelDataset, seed_value: u64) -> Result<FittedSimDesign>;
}

/// The fitted state a design leaves behind for per-replication redraws.
pub enum FittedSimDesign {
    Complete,
    Blocked(Partition),
    Paired { pairs: Vec<(usize, usize)>, n: usize },
    Rerandomize {
        criterion: BalanceCriterion,
        mode: RerandMode,
    },
}

/// The always-present baseline.
pub struct CompleteDesign;

impl SimDesign for CompleteDesign {
    fn name(&self) -> String {
        "complete".into()
    }

    fn required_pre_periods(&self) -> usize {
        0
    }

    fn fit(&self, _panel: &PanelDataset, _seed: u64) -> Result<FittedSimDesign> {
        Ok(FittedSimDesign::Complete)
    }
}

fn redraw_pair_arms(pairs: &[(usize, usize)], n: usize, seed_value: u64) -> TreatmentAssignment {
    let mut treated = vec![false; n];
    let mut group_of = vec![None; n];
    for (pid, &(a, b)) in pairs.iter().enumerate() {
        let first: bool = seed::rng(seed_value, "pair.arm", pid as u64).random();
        treated[a] = first;
        treated[b] = !first;
        group_of[a] = Some(pid);
        group_of[b] = Some(pid);
    }
    TreatmentAssignment {
        treated,
        misfit: vec![false; n],
        group_of,
        method: crate::assignment::AssignmentMethod::Paired {
            n_pairs: pairs.len(),
        },
        seed: seed_value,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlaceboOptions {
    pub n_reps: usize,
    /// Evaluation period; defaults to post, falling back to pre3.
    pub eval_period: Option<Period>,
    /// Refit the design inside every replication instead of once.
    pub refit_per_rep: bool,
}

impl Default for PlaceboOptions {
    fn default() -> Self {
        PlaceboOptions {
            n_reps: 10_000,
            eval_period: None,
            refit_per_rep: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    /// Mean β̂² over replications (true effect is zero).
    pub coefficient_mse: f64,
    pub coefficient_mse_mc_se: f64,
    /// Mean estimated standard error of β̂.
    pub mean_se: f64,
    pub mean_se_mc_se: f64,
    pub mean_beta: f64,
    pub mean_beta_mc_se: f64,
    pub n_reps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub rows: Vec<MethodRow>,
    pub eval_period: Period,
    pub seed: u64,
    pub panel_fingerprint: String,
}

impl SimulationReport {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,coefficient_mse,coefficient_mse_mc_se,mean_se,mean_se_mc_se,mean_beta,mean_beta_mc_se,n_reps\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method,
                r.coefficient_mse,
                r.coefficient_mse_mc_se,
                r.mean_se,
                r.mean_se_mc_se,
                r.mean_beta,
                r.mean_beta_mc_se,
                r.n_reps
            ));
        }
        out
    }
}

/// Order-independent sum: pairwise reduction over a fixed-index vector, so
/// parallel and serial runs agree bit for bit.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

fn mean_and_mc_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Run the placebo experiment: fit each design once on pre-period data,
/// then per replication draw a fresh assignment and estimate the (zero)
/// treatment effect on the evaluation period. A complete-randomization
/// baseline row is always included.
pub fn run_placebo_sims(
    panel: &PanelDataset,
    methods: &[&dyn SimDesign],
    options: &PlaceboOptions,
    seed_value: u64,
) -> Result<SimulationReport> {
    if options.n_reps == 0 {
        return Err(Error::BadSpec("n_reps must be positive".into()));
    }
    let eval_period = match options.eval_period {
        Some(p) => {
            if !panel.has_period(p) {
                return Err(Error::BadSpec(format!("panel has no `{p}` period")));
            }
            p
        }
        None if panel.has_period(Period::Post) => Period::Post,
        None if panel.has_period(Period::Pre3) => Period::Pre3,
        None => {
            return Err(Error::BadSpec(
                "panel needs a post or pre3 period to evaluate placebo designs".into(),
            ))
        }
    };
    let y_eval = panel.outcome(eval_period)?;
    // withhold the evaluation outcomes from every design procedure
    let design_panel = panel.without_period(eval_period)?;

    let baseline = CompleteDesign;
    let mut all: Vec<&dyn SimDesign> = vec![&baseline];
    all.extend(methods.iter().copied());

    let mut rows = Vec::with_capacity(all.len());
    for (m_idx, method) in all.iter().enumerate() {
        if design_panel.n_pre_periods() < method.required_pre_periods() {
            return Err(Error::LeakageGuard {
                method: method.name(),
                reason: format!(
                    "needs {} pre-periods but only {} remain after withholding `{}`",
                    method.required_pre_periods(),
                    design_panel.n_pre_periods(),
                    eval_period
                ),
            });
        }
        let method_seed = seed::derive(seed_value, "sim.method", m_idx as u64);
        let fitted = if options.refit_per_rep {
            None
        } else {
            Some(method.fit(&design_panel, method_seed)?)
        };

        let stats: Vec<(f64, f64)> = (0..options.n_reps)
            .into_par_iter()
            .map(|rep| -> Result<(f64, f64)> {
                let rep_seed = seed::derive(method_seed, "sim.rep", rep as u64);
                let refit;
                let design = match &fitted {
                    Some(f) => f,
                    None => {
                        refit = method.fit(&design_panel, seed::derive(rep_seed, "sim.refit", 0))?;
                        &refit
                    }
                };
                let est = match design {
                    FittedSimDesign::Complete => {
                        let a = complete_randomization(panel.n_units(), rep_seed);
                        ols_block_estimate(&y_eval, &a.treated, None)?
                    }
                    FittedSimDesign::Blocked(p) => {
                        let a = assign_within_blocks(p, rep_seed);
                        let blocks = if p.n_blocks > 1 { Some(&p.block_of[..]) } else { None };
                        ols_block_estimate(&y_eval, &a.treated, blocks)?
                    }
                    FittedSimDesign::Paired { pairs, n } => {
                        let a = redraw_pair_arms(pairs, *n, rep_seed);
                        // estimate on paired units only, with pair dummies
                        let mut y_sub = Vec::with_capacity(pairs.len() * 2);
                        let mut d_sub = Vec::with_capacity(pairs.len() * 2);
                        let mut g_sub = Vec::with_capacity(pairs.len() * 2);
                        for (pid, &(u, v)) in pairs.iter().enumerate() {
                            for unit in [u, v] {
                                y_sub.push(y_eval[unit]);
                                d_sub.push(a.treated[unit]);
                                g_sub.push(pid);
                            }
                        }
                        ols_block_estimate(&y_sub, &d_sub, Some(&g_sub))?
                    }
                    FittedSimDesign::Rerandomize { criterion, mode } => {
                        let (a, _) = rerandomize(criterion, *mode, rep_seed)?;
                        ols_block_estimate(&y_eval, &a.treated, None)?
                    }
                };
                Ok((est.beta_hat, est.se))
            })
            .collect::<Result<_>>()?;

        let betas: Vec<f64> = stats.iter().map(|s| s.0).collect();
        let beta_sq: Vec<f64> = stats.iter().map(|s| s.0 * s.0).collect();
        let ses: Vec<f64> = stats.iter().map(|s| s.1).collect();
        let (mse, mse_se) = mean_and_mc_se(&beta_sq);
        let (mean_se, mean_se_se) = mean_and_mc_se(&ses);
        let (mean_beta, mean_beta_se) = mean_and_mc_se(&betas);
        rows.push(MethodRow {
            method: method.name(),
            coefficient_mse: mse,
            coefficient_mse_mc_se: mse_se,
            mean_se,
            mean_se_mc_se: mean_se_se,
            mean_beta,
            mean_beta_mc_se: mean_beta_se,
            n_reps: options.n_reps,
        });
    }

    Ok(SimulationReport {
        rows,
        eval_period,
        seed: seed_value,
        panel_fingerprint: format!("{:016x}", panel.fingerprint()),
    })
}
