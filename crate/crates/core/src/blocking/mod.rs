//! Partition construction: variable-selection trees, future-prognostic-score
//! intervals, sequential allocators, adaptive grids, and the reduced-data
//! fallbacks.

mod allocate;
mod fallback;
mod fps;
mod grid;
mod partition;
mod vs;

pub use allocate::{optimize_1d_partition, scaled_sequential_allocate, sequential_allocate};
pub use fallback::{fallback_blocking, FallbackMode, WeightRule};
pub use fps::{fps_blocking, fps_scores, Allocator, FpsFit, FpsOptions, PrognosticScores};
pub use grid::{adaptive_grid, merged_grid_partition, uniform_quantile_grid};
pub use partition::{
    score_feature_matrix, GridProjection, Partition, PartitionDefinition, ScoreModelRef,
    SCORE_COLUMN,
};
pub use vs::{
    vs_blocking, FeatureSelection, SelectedFeatures, VsFit, VsOptions, YHAT_COLUMN, YPRE_COLUMN,
};
