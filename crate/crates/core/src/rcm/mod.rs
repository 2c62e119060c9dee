//! Residual correction: weighting functions, residual selection, streaming
//! state and the three-stage train/predict pipeline.

mod pipeline;
mod selection;
mod state;
mod weighting;

pub use pipeline::{
    compute_residuals, train_adaptive, AdaptiveModels, CorrectionStream, LookAheadAudit,
    OceanPrediction, RcmConfig, ShipmentPredictor, TargetModels, RECURSIVE_TRAINING,
};
pub use selection::{select_series, ResidualPoint, ResidualSource, SelectionScheme};
pub use state::{Accumulator, CorrectionState};
pub use weighting::{correction, weights, LinearDirection, WeightingConfig, WeightingScheme};
