//! Pairwise comparison engine and identity statistics.

mod curves;
mod engine;
mod grid;
pub mod naive;
mod report;
mod threshold;

pub use curves::{
    default_grid, far_curve, frr_curve, nn_far_curve, roc_curve, FarCurve, FrrCurve, RocCurve,
};
pub use engine::{ComparisonMode, ComparisonSpec, Engine, DEFAULT_BLOCK_SIZE};
pub use grid::{ThresholdGrid, DEFAULT_GRID_POINTS};
pub use naive::far_curve_naive;
pub use report::{
    binomial_z, overfit_report, significant_excess, within_band, CurveSet, Flags, OverfitReport,
    MAX_TESTED_FAR, MIN_CELL_COUNT, SIGMA_BAND,
};
pub use threshold::{
    distinguishable_identities, frr_at_far, frr_at_threshold, mode_collapse_fraction,
    threshold_for_far, threshold_for_far_in, OperatingPoint,
};
