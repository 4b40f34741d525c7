//! Run configuration: one JSON file, unknown keys rejected, every piece of
//! randomness derived from the single master seed.

use serde::{Deserialize, Serialize};

use blockdesign::blocking::{Allocator, FeatureSelection, WeightRule};
use blockdesign::cv::SelectionRule;
use blockdesign::dataset::{PanelSchema, Period};
use blockdesign::sim::SyntheticDgpSpec;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

fn default_c_b() -> usize {
    4
}

fn default_true() -> bool {
    true
}

fn default_forest_trees() -> usize {
    500
}

fn default_n_repeats() -> usize {
    10
}

fn default_n_reps() -> usize {
    10_000
}

fn default_draws() -> usize {
    1000
}

fn default_alpha() -> f64 {
    0.05
}

fn default_max_draws() -> usize {
    10_000
}

fn default_s_draws() -> usize {
    2000
}

fn default_weight() -> f64 {
    0.5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    #[serde(default = "default_c_b")]
    pub c_b: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub design: Option<DesignConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticDgpSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvInput {
    pub path: String,
    pub schema: PanelSchema,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Vs,
    Fps,
    Auto,
    Matching,
    Rerandomization,
    Fallback,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub strategy: StrategyKind,
    #[serde(default = "FeatureSelectionDefault::get")]
    pub feature_selection: FeatureSelection,
    #[serde(default = "default_true")]
    pub include_yhat: bool,
    #[serde(default = "AllocatorDefault::get")]
    pub allocator: Allocator,
    #[serde(default = "default_forest_trees")]
    pub forest_trees: usize,
    /// 2-fold CV repeats when strategy = auto.
    #[serde(default = "default_n_repeats")]
    pub n_repeats: usize,
    #[serde(default = "SelectionRuleDefault::get")]
    pub cv_rule: SelectionRule,
    /// vs | fps criterion for matching and rerandomization.
    #[serde(default = "CriterionSourceDefault::get")]
    pub criterion: CriterionSource,
    #[serde(default = "RerandSettings::default_settings")]
    pub rerandomization: RerandSettings,
    #[serde(default)]
    pub fallback: Option<FallbackSettings>,
}

struct FeatureSelectionDefault;
impl FeatureSelectionDefault {
    fn get() -> FeatureSelection {
        FeatureSelection::Auto
    }
}

struct AllocatorDefault;
impl AllocatorDefault {
    fn get() -> Allocator {
        Allocator::Sequential
    }
}

struct SelectionRuleDefault;
impl SelectionRuleDefault {
    fn get() -> SelectionRule {
        SelectionRule::Min
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionSource {
    Vs,
    Fps,
}

struct CriterionSourceDefault;
impl CriterionSourceDefault {
    fn get() -> CriterionSource {
        CriterionSource::Fps
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerandSettings {
    #[serde(default = "RerandModeKind::default_kind")]
    pub mode: RerandModeKind,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_max_draws")]
    pub max_draws: usize,
}

impl RerandSettings {
    fn default_settings() -> Self {
        RerandSettings {
            mode: RerandModeKind::MinMax,
            draws: default_draws(),
            alpha: default_alpha(),
            max_draws: default_max_draws(),
        }
    }

    pub fn to_mode(&self) -> blockdesign::assignment::RerandMode {
        match self.mode {
            RerandModeKind::MinMax => blockdesign::assignment::RerandMode::MinMax {
                draws: self.draws,
            },
            RerandModeKind::BigStick => blockdesign::assignment::RerandMode::BigStick {
                alpha: self.alpha,
                max_draws: self.max_draws,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerandModeKind {
    MinMax,
    BigStick,
}

impl RerandModeKind {
    fn default_kind() -> Self {
        RerandModeKind::MinMax
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FallbackSettings {
    pub mode: FallbackModeKind,
    #[serde(default = "WeightRuleDefault::get")]
    pub weight_rule: WeightRule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackModeKind {
    SinglePre,
    ZeroPre,
}

struct WeightRuleDefault;
impl WeightRuleDefault {
    fn get() -> WeightRule {
        WeightRule::Sum
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_n_reps")]
    pub n_reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_period: Option<Period>,
    #[serde(default)]
    pub refit_per_rep: bool,
    /// Extra named scenarios to run alongside the top-level input.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<Scenario>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub input: InputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum MethodSpec {
    Vs {
        #[serde(default = "FeatureSelectionDefault::get")]
        feature_selection: FeatureSelection,
        #[serde(default = "default_true")]
        include_yhat: bool,
        #[serde(default = "default_forest_trees")]
        forest_trees: usize,
    },
    Fps {
        #[serde(default = "AllocatorDefault::get")]
        allocator: Allocator,
        #[serde(default = "default_forest_trees")]
        forest_trees: usize,
    },
    PairedVs {
        #[serde(default = "default_forest_trees")]
        forest_trees: usize,
    },
    PairedFps {
        #[serde(default = "default_forest_trees")]
        forest_trees: usize,
    },
    RerandVs {
        #[serde(default = "RerandSettings::default_settings")]
        settings: RerandSettings,
        #[serde(default = "default_forest_trees")]
        forest_trees: usize,
    },
    RerandFps {
        #[serde(default = "RerandSettings::default_settings")]
        settings: RerandSettings,
        #[serde(default = "default_forest_trees")]
        forest_trees: usize,
    },
    ManualGrid {
        name: String,
        features: Vec<String>,
        edges: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareCriterion {
    Cv,
    Pre3,
    Tradeoff,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub criterion: CompareCriterion,
    pub candidates: Vec<CandidateSpec>,
    #[serde(default = "default_n_repeats")]
    pub n_repeats: usize,
    #[serde(default = "default_s_draws")]
    pub s_draws: usize,
    #[serde(default = "default_weight")]
    pub tradeoff_weight: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum CandidateSpec {
    Vs {
        #[serde(default = "FeatureSelectionDefault::get")]
        feature_selection: FeatureSelection,
        #[serde(default = "default_true")]
        include_yhat: bool,
        #[serde(default = "default_forest_trees")]
        forest_trees: usize,
    },
    Fps {
        #[serde(default = "AllocatorDefault::get")]
        allocator: Allocator,
        #[serde(default = "default_forest_trees")]
        forest_trees: usize,
    },
}

/// A reproducibility manifest wraps the resolved config; feeding a manifest
/// back through `--config` reruns the identical job.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact_version: String,
    pub command: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
}
