//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // --- data loading / validation ---
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("schema mismatch: column `{0}` not present in input")]
    SchemaMismatch(String),
    #[error("missing data in rows {rows:?} (1-based, excluding header)")]
    MissingData { rows: Vec<usize> },
    #[error("non-numeric cell at row {row}, column `{column}`: {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("invalid schema: {0}")]
    BadSchema(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    // --- ml primitives ---
    #[error("features are not standardized: column {column} has mean {mean:.3e}")]
    NonStandardized { column: usize, mean: f64 },
    #[error("coordinate descent did not converge after {sweeps} sweeps (objective {objective})")]
    DidNotConverge { sweeps: usize, objective: f64 },
    #[error("singular design: selected columns are collinear")]
    SingularDesign,
    #[error("empty input")]
    EmptyInput,
    #[error("empty partition")]
    EmptyPartition,
    #[error("cannot satisfy minimum cell size {c_b}: only {available} units at the root")]
    CannotSatisfy { c_b: usize, available: usize },

    // --- cross validation ---
    #[error("invalid fold count {k} for {n} observations")]
    BadK { k: usize, n: usize },
    #[error("fitter failed on fold {fold}: {source}")]
    FitterFailed {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    // --- blocking ---
    #[error("too few units: need at least {need}, have {have}")]
    TooFewUnits { need: usize, have: usize },
    #[error("invalid block count {b}: must be in 1..={max}")]
    BadBlockCount { b: usize, max: usize },
    #[error("cell budget too small: {0}")]
    BudgetTooSmall(String),
    #[error("fallback mode `{mode}` incompatible with the data: {reason}")]
    ModeDataMismatch { mode: String, reason: String },
    #[error("partition replay failed: {0}")]
    ReplayMismatch(String),

    // --- assignment ---
    #[error("odd number of units ({0}) cannot be fully paired")]
    OddN(usize),
    #[error("degenerate balance variable {0}: zero variance with nonzero mean difference")]
    DegenerateVariable(usize),

    // --- estimation ---
    #[error("rank-deficient design matrix (column {0})")]
    RankDeficient(usize),
    #[error("treatment vector must contain both arms")]
    DegenerateArms,
    #[error("zero variance in both arms with unequal means")]
    ZeroVariance,
    #[error("degrees of freedom exhausted: n={n}, b={b}")]
    DofExhausted { n: usize, b: usize },

    // --- strategy selection ---
    #[error("panel has no pre3 period")]
    MissingPre3,
    #[error("panel too small for a 2-fold split: each fold needs at least {need} units")]
    TooSmallForSplit { need: usize },

    // --- simulation ---
    #[error("invalid synthetic panel spec: {0}")]
    BadSpec(String),
    #[error("design procedure `{method}` would read the evaluation period: {reason}")]
    LeakageGuard { method: String, reason: String },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}
