//! Overfitting / mode-collapse report comparing a real and a synthetic set.
//!
//! Three comparisons are made: Real-vs-Real (non-mated pairs of the labeled
//! real set), Fake-vs-Real (every synthetic row against every real row) and
//! Fake-vs-Fake (non-mated pairs of the synthetic set; every pair when the
//! synthetic set is unlabeled). A grid point is flagged when the synthetic
//! curve exceeds Real-vs-Real by more than three binomial standard errors.
//! Only points on the acceptance side of the real distribution (real FAR at
//! most one half) where both curves hold at least `MIN_CELL_COUNT`
//! acceptances are tested; below that the normal approximation behind the
//! band does not hold.

use serde::Serialize;

use crate::embeddings::{EmbeddingSet, ScoreScale};
use crate::error::{Error, Result};

use super::curves::{default_grid, far_curve, nn_far_curve, FarCurve};
use super::engine::{ComparisonSpec, Engine};
use super::grid::{ThresholdGrid, DEFAULT_GRID_POINTS};

/// Width of the significance band, in standard errors.
pub const SIGMA_BAND: f64 = 3.0;

/// Minimum acceptance count on both curves for a grid point to be tested.
pub const MIN_CELL_COUNT: u64 = 10;

/// Largest Real-vs-Real FAR at which a grid point is tested.
pub const MAX_TESTED_FAR: f64 = 0.5;

/// Two-proportion z statistic of `test` over `reference`, using the pooled
/// binomial variance. Zero when both proportions are 0 or both are 1.
pub fn binomial_z(test_count: u64, test_total: u64, ref_count: u64, ref_total: u64) -> f64 {
    let (n1, n2) = (test_total as f64, ref_total as f64);
    let p1 = test_count as f64 / n1;
    let p2 = ref_count as f64 / n2;
    let pooled = (test_count + ref_count) as f64 / (n1 + n2);
    let var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2);
    if var <= 0.0 {
        return 0.0;
    }
    (p1 - p2) / var.sqrt()
}

/// True when the two rates are within `SIGMA_BAND` standard errors.
pub fn within_band(test_count: u64, test_total: u64, ref_count: u64, ref_total: u64) -> bool {
    binomial_z(test_count, test_total, ref_count, ref_total).abs() <= SIGMA_BAND
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSet {
    pub real_vs_real: FarCurve,
    pub fake_vs_real: FarCurve,
    pub fake_vs_fake: FarCurve,
}

/// Grid indices where a synthetic curve significantly exceeds Real-vs-Real.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Flags {
    pub overfitting: Vec<usize>,
    pub collapse: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverfitReport {
    pub real: String,
    pub fake: String,
    pub fake_labeled: bool,
    pub thresholds: Vec<f64>,
    pub all_pairs: CurveSet,
    pub nearest_neighbour: CurveSet,
    pub all_pairs_flags: Flags,
    pub nearest_neighbour_flags: Flags,
    pub overfitting: bool,
    pub collapse: bool,
}

/// Whether the synthetic curve significantly exceeds the reference at `i`.
pub fn significant_excess(test: &FarCurve, reference: &FarCurve, i: usize) -> bool {
    let (tc, rc) = (test.counts[i], reference.counts[i]);
    let testable = tc >= MIN_CELL_COUNT
        && rc >= MIN_CELL_COUNT
        && rc as f64 / reference.total as f64 <= MAX_TESTED_FAR;
    testable && binomial_z(tc, test.total, rc, reference.total) > SIGMA_BAND
}

fn excess_points(test: &FarCurve, reference: &FarCurve) -> Vec<usize> {
    (0..test.counts.len())
        .filter(|&i| significant_excess(test, reference, i))
        .collect()
}

impl CurveSet {
    fn flags(&self) -> Flags {
        Flags {
            overfitting: excess_points(&self.fake_vs_real, &self.real_vs_real),
            collapse: excess_points(&self.fake_vs_fake, &self.real_vs_real),
        }
    }
}

/// Build the report. With `grid = None` a default grid spans the scores of
/// all three all-pairs comparisons.
pub fn overfit_report(
    engine: &Engine,
    real: &EmbeddingSet,
    fake: &EmbeddingSet,
    scale: ScoreScale,
    grid: Option<&ThresholdGrid>,
) -> Result<OverfitReport> {
    if real.labels().is_none() {
        return Err(Error::LabelsRequired(format!(
            "real set {:?} needs identity labels",
            real.name()
        )));
    }
    let fake_labeled = fake.labels().is_some();
    let fake_within = if fake_labeled {
        fake.clone()
    } else {
        fake.clone().with_distinct_labels()
    };
    let rr = ComparisonSpec::within_nonmated(real, scale);
    let fr = ComparisonSpec::between(fake, real, scale);
    let ff = ComparisonSpec::within_nonmated(&fake_within, scale);

    let grid = match grid {
        Some(g) => g.clone(),
        None => default_grid(engine, &[rr, fr, ff], DEFAULT_GRID_POINTS)?,
    };
    let all_pairs = CurveSet {
        real_vs_real: far_curve(engine, &rr, &grid)?,
        fake_vs_real: far_curve(engine, &fr, &grid)?,
        fake_vs_fake: far_curve(engine, &ff, &grid)?,
    };
    let nearest_neighbour = CurveSet {
        real_vs_real: nn_far_curve(engine, &rr, &grid)?,
        fake_vs_real: nn_far_curve(engine, &fr, &grid)?,
        fake_vs_fake: nn_far_curve(engine, &ff, &grid)?,
    };
    let all_pairs_flags = all_pairs.flags();
    let nearest_neighbour_flags = nearest_neighbour.flags();
    let overfitting =
        !all_pairs_flags.overfitting.is_empty() || !nearest_neighbour_flags.overfitting.is_empty();
    let collapse =
        !all_pairs_flags.collapse.is_empty() || !nearest_neighbour_flags.collapse.is_empty();
    Ok(OverfitReport {
        real: real.name().to_string(),
        fake: fake.name().to_string(),
        fake_labeled,
        thresholds: grid.values().to_vec(),
        all_pairs,
        nearest_neighbour,
        all_pairs_flags,
        nearest_neighbour_flags,
        overfitting,
        collapse,
    })
}
