//! The `Partition` type and its replayable definitions.
//!
//! A partition stores both the unit→block map and the rule that generated
//! it. Reapplying the definition to the generating feature matrix must
//! reproduce `block_of` exactly; `Partition::from_definition` builds the
//! map that way, so the invariant holds by construction.

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureMatrix, Matrix, Scaler};
use crate::error::{Error, Result};
use crate::ml::Tree;

/// Reserved column name for one-dimensional score inputs.
pub const SCORE_COLUMN: &str = "__score";

/// Descriptor of the prediction model behind a score-interval definition.
/// Recorded for audit; the fitted model itself lives on the fit object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreModelRef {
    pub kind: String,
    pub n_trees: usize,
    pub seed: u64,
}

/// Projection applied before grid routing (PCA fallback): rows of
/// `components` map centered raw features onto component scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridProjection {
    /// Raw input columns, by name.
    pub features: Vec<String>,
    pub means: Vec<f64>,
    /// k × |features| component rows.
    pub components: Matrix,
}

impl GridProjection {
    fn project(&self, raw_row: &[f64]) -> Vec<f64> {
        (0..self.components.n_rows())
            .map(|c| {
                raw_row
                    .iter()
                    .zip(&self.means)
                    .enumerate()
                    .map(|(j, (v, m))| (v - m) * self.components.get(c, j))
                    .sum()
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PartitionDefinition {
    /// CART cells over named features. Thresholds live in standardized
    /// units when a scaler is present; inputs are raw values.
    Tree {
        features: Vec<String>,
        scaler: Option<Scaler>,
        tree: Tree,
    },
    /// Per-variable quantile bin edges; flattened cells map onto blocks
    /// (several cells may share a block after minimum-size merging).
    Grid {
        features: Vec<String>,
        /// Inner edges per variable, strictly increasing.
        edges: Vec<Vec<f64>>,
        /// Flattened cell index → block id.
        cell_to_block: Vec<usize>,
        projection: Option<GridProjection>,
    },
    /// Score intervals: block i covers scores below `cuts[i]` and above
    /// `cuts[i−1]`.
    Intervals {
        cuts: Vec<f64>,
        score_model: Option<ScoreModelRef>,
    },
    /// A subgroup seed refined independently inside each seed cell.
    Composed {
        seed: Box<PartitionDefinition>,
        /// One sub-definition per seed cell.
        subs: Vec<PartitionDefinition>,
        /// Block-id offset per seed cell.
        offsets: Vec<usize>,
    },
}

impl PartitionDefinition {
    /// Number of blocks this definition can emit.
    pub fn n_blocks(&self) -> usize {
        match self {
            PartitionDefinition::Tree { tree, .. } => tree.n_leaves,
            PartitionDefinition::Grid { cell_to_block, .. } => {
                cell_to_block.iter().max().map_or(0, |m| m + 1)
            }
            PartitionDefinition::Intervals { cuts, .. } => cuts.len() + 1,
            PartitionDefinition::Composed { subs, offsets, .. } => offsets
                .last()
                .map_or(0, |o| o + subs.last().map_or(0, |s| s.n_blocks())),
        }
    }

    fn columns_for<'m>(&self, fm: &'m FeatureMatrix, names: &[String]) -> Result<Vec<usize>> {
        let _ = fm.n_rows();
        names
            .iter()
            .map(|name| {
                fm.column_index(name)
                    .ok_or_else(|| Error::ReplayMismatch(format!("missing feature `{name}`")))
            })
            .collect()
    }

    fn assign_row(&self, fm: &FeatureMatrix, cols: &AssignPlan, i: usize) -> usize {
        match (self, cols) {
            (PartitionDefinition::Tree { scaler, tree, .. }, AssignPlan::Columns(idx)) => {
                let mut row: Vec<f64> = idx.iter().map(|&j| fm.values.get(i, j)).collect();
                if let Some(s) = scaler {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = s.transform_value(j, *v);
                    }
                }
                tree.apply_row(&row).0
            }
            (
                PartitionDefinition::Grid {
                    edges,
                    cell_to_block,
                    projection,
                    ..
                },
                AssignPlan::Columns(idx),
            ) => {
                let raw: Vec<f64> = idx.iter().map(|&j| fm.values.get(i, j)).collect();
                let row = match projection {
                    Some(p) => p.project(&raw),
                    None => raw,
                };
                let mut cell = 0usize;
                for (v, e) in row.iter().zip(edges) {
                    let bin = e.partition_point(|edge| edge <= v);
                    cell = cell * (e.len() + 1) + bin;
                }
                cell_to_block[cell]
            }
            (PartitionDefinition::Intervals { cuts, .. }, AssignPlan::Columns(idx)) => {
                let s = fm.values.get(i, idx[0]);
                cuts.partition_point(|c| *c <= s)
            }
            (
                PartitionDefinition::Composed { subs, offsets, .. },
                AssignPlan::Composed { seed_plan, sub_plans, seed_def },
            ) => {
                let cell = seed_def.assign_row(fm, seed_plan, i);
                offsets[cell] + subs[cell].assign_row(fm, &sub_plans[cell], i)
            }
            _ => unreachable!("assign plan does not match definition"),
        }
    }

    fn plan(&self, fm: &FeatureMatrix) -> Result<AssignPlan<'_>> {
        match self {
            PartitionDefinition::Tree { features, .. } => {
                Ok(AssignPlan::Columns(self.columns_for(fm, features)?))
            }
            PartitionDefinition::Grid {
                features,
                projection,
                ..
            } => {
                let names = match projection {
                    Some(p) => &p.features,
                    None => features,
                };
                Ok(AssignPlan::Columns(self.columns_for(fm, names)?))
            }
            PartitionDefinition::Intervals { .. } => {
                let j = fm.column_index(SCORE_COLUMN).ok_or_else(|| {
                    Error::ReplayMismatch(format!("missing feature `{SCORE_COLUMN}`"))
                })?;
                Ok(AssignPlan::Columns(vec![j]))
            }
            PartitionDefinition::Composed { seed, subs, .. } => {
                let seed_plan = Box::new(seed.plan(fm)?);
                let sub_plans = subs.iter().map(|s| s.plan(fm)).collect::<Result<_>>()?;
                Ok(AssignPlan::Composed {
                    seed_def: seed,
                    seed_plan,
                    sub_plans,
                })
            }
        }
    }

    /// Map every row of `fm` to a block id.
    pub fn assign(&self, fm: &FeatureMatrix) -> Result<Vec<usize>> {
        let plan = self.plan(fm)?;
        Ok((0..fm.n_rows()).map(|i| self.assign_row(fm, &plan, i)).collect())
    }
}

enum AssignPlan<'d> {
    Columns(Vec<usize>),
    Composed {
        seed_def: &'d PartitionDefinition,
        seed_plan: Box<AssignPlan<'d>>,
        sub_plans: Vec<AssignPlan<'d>>,
    },
}

/// A unit→block map with its generating definition and minimum block size.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Partition {
    pub block_of: Vec<usize>,
    pub n_blocks: usize,
    pub c_b: usize,
    pub definition: PartitionDefinition,
}

impl Partition {
    /// Build a partition by applying `definition` to the generating data,
    /// checking density of block ids and the minimum block size.
    pub fn from_definition(
        definition: PartitionDefinition,
        fm: &FeatureMatrix,
        c_b: usize,
    ) -> Result<Partition> {
        let block_of = definition.assign(fm)?;
        let n_blocks = definition.n_blocks();
        let mut sizes = vec![0usize; n_blocks];
        for &b in &block_of {
            if b >= n_blocks {
                return Err(Error::Internal(format!(
                    "definition emitted block {b} outside [0, {n_blocks})"
                )));
            }
            sizes[b] += 1;
        }
        if let Some(small) = sizes.iter().position(|&s| s < c_b) {
            return Err(Error::Internal(format!(
                "block {small} has {} units, below the minimum {c_b}",
                sizes[small]
            )));
        }
        Ok(Partition {
            block_of,
            n_blocks,
            c_b,
            definition,
        })
    }

    pub fn n_units(&self) -> usize {
        self.block_of.len()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_blocks];
        for &b in &self.block_of {
            sizes[b] += 1;
        }
        sizes
    }

    /// Unit indices per block, in block-id order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_blocks];
        for (i, &b) in self.block_of.iter().enumerate() {
            out[b].push(i);
        }
        out
    }

    /// Single block holding all `n` units; the trivial (complete
    /// randomization) partition.
    pub fn single_block(n: usize) -> Partition {
        Partition {
            block_of: vec![0; n],
            n_blocks: 1,
            c_b: 1,
            definition: PartitionDefinition::Intervals {
                cuts: Vec::new(),
                score_model: None,
            },
        }
    }

    /// Reapply the definition to a feature matrix (replay / audit path).
    pub fn assign(&self, fm: &FeatureMatrix) -> Result<Vec<usize>> {
        self.definition.assign(fm)
    }
}

/// Wrap a score vector as the one-column feature matrix interval
/// definitions route on.
pub fn score_feature_matrix(scores: &[f64]) -> FeatureMatrix {
    FeatureMatrix::new(
        vec![SCORE_COLUMN.to_string()],
        Matrix::from_columns(&[scores.to_vec()]),
    )
}
