//! Panel experiment data: loading, validation, and standardization.

mod matrix;
mod panel;
mod scale;

pub use matrix::{FeatureMatrix, Matrix};
pub use panel::{load_panel, PanelDataset, PanelSchema, Period, TimeVarying, TimeVaryingSchema};
pub use scale::{standardize, Scaler};
