//! From-scratch ML primitives: Lasso with coordinate descent, CART
//! regression trees (MSE and expected-MSE split criteria), random forests,
//! post-selection importance weights, and a PCA fallback.

mod forest;
pub(crate) mod linear;
mod pca;
mod tree;

pub use forest::{forest_fit, Forest, ForestConfig};
pub use linear::{
    lasso_fit, lasso_lambda_grid, post_lasso_importance, ImportanceWeights, LinearModel,
};
pub use pca::{pca_reduce, PcaCriterion, PcaResult};
pub use tree::{
    cart_fit, emse_score, tree_prune_to_min_leaf, CellStats, Node, SplitCriterion, SplitScore,
    Tree,
};
