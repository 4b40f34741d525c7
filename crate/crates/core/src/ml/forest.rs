//! Random forest regression: bootstrapped CART trees with feature
//! subsampling at every split.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::ml::tree::{fit_with_sampler, RandomSubset, SplitCriterion, Tree};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features sampled per split; `None` means ⌈K/3⌉.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    /// `None` grows trees until the leaf-size floor stops them.
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            mtry: None,
            min_leaf: 6,
            max_depth: None,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    /// A smaller forest for fast fitting, same defaults otherwise.
    pub fn with_trees(n_trees: usize) -> Self {
        ForestConfig {
            n_trees,
            ..ForestConfig::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub mtry: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Forest {
    /// Arithmetic mean of member-tree predictions.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.n_rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

/// Fit a random forest. Deterministic given the seed: tree `t` draws its
/// bootstrap sample and split-candidate features from an RNG derived from
/// `(seed, t)`, so results do not depend on thread scheduling.
pub fn forest_fit(x: &Matrix, y: &[f64], config: &ForestConfig, seed_value: u64) -> Result<Forest> {
    let n = x.n_rows();
    let k = x.n_cols();
    if n == 0 || y.len() != n {
        return Err(Error::EmptyInput);
    }
    if config.n_trees == 0 {
        return Err(Error::Internal("n_trees must be at least 1".into()));
    }
    let mtry = config.mtry.unwrap_or_else(|| k.div_ceil(3)).clamp(1, k.max(1));
    let max_depth = config.max_depth.unwrap_or(usize::MAX);

    let trees: Vec<Tree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed_value, "forest.tree", t as u64);
            let idx: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let xb = x.rows_subset(&idx);
            let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let mut sampler = RandomSubset {
                mtry,
                rng: &mut rng,
            };
            fit_with_sampler(
                &xb,
                &yb,
                max_depth,
                config.min_leaf,
                SplitCriterion::Mse,
                &mut sampler,
            )
        })
        .collect::<Result<_>>()?;

    Ok(Forest {
        trees,
        mtry,
        min_leaf: config.min_leaf,
        bootstrap: config.bootstrap,
        seed: seed_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::cart_fit;

    fn grid_data(n: usize) -> (Matrix, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let y: Vec<f64> = xs.iter().map(|v| if *v > 0.5 { 1.0 } else { 0.0 }).collect();
        (Matrix::from_columns(&[xs]), y)
    }

    #[test]
    fn constant_outcome_predicts_constant() {
        let (x, _) = grid_data(30);
        let y = vec![3.5; 30];
        let forest = forest_fit(&x, &y, &ForestConfig::with_trees(20), 7).unwrap();
        for i in 0..30 {
            assert_eq!(forest.predict_row(x.row(i)), 3.5);
        }
    }

    #[test]
    fn degenerate_forest_equals_cart() {
        let x = Matrix::from_columns(&[
            vec![0.1, 0.5, 0.9, 1.4, 2.0, 2.3, 3.1, 3.8, 4.2, 5.0],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
        ]);
        let y = vec![0.2, 0.1, 0.4, 0.5, 1.9, 2.1, 2.2, 2.0, 3.3, 3.6];
        let config = ForestConfig {
            n_trees: 1,
            mtry: Some(2),
            min_leaf: 2,
            max_depth: Some(4),
            bootstrap: false,
        };
        let forest = forest_fit(&x, &y, &config, 99).unwrap();
        let cart = cart_fit(&x, &y, 4, 2, SplitCriterion::Mse).unwrap();
        assert_eq!(forest.trees[0], cart);
        for i in 0..x.n_rows() {
            assert_eq!(forest.predict_row(x.row(i)).to_bits(), cart.predict_row(x.row(i)).to_bits());
        }
    }

    #[test]
    fn binary_outcome_predictions_bounded() {
        let (x, y) = grid_data(40);
        let forest = forest_fit(&x, &y, &ForestConfig::with_trees(30), 11).unwrap();
        for i in 0..40 {
            let p = forest.predict_row(x.row(i));
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = grid_data(25);
        let a = forest_fit(&x, &y, &ForestConfig::with_trees(10), 5).unwrap();
        let b = forest_fit(&x, &y, &ForestConfig::with_trees(10), 5).unwrap();
        for i in 0..25 {
            assert_eq!(
                a.predict_row(x.row(i)).to_bits(),
                b.predict_row(x.row(i)).to_bits()
            );
        }
    }
}
