//! Operating points: thresholds at a target FAR, FRR at a threshold, and
//! the identity-count arithmetic built on FAR values.

use serde::Serialize;

use crate::error::{Error, Result};

use super::engine::{ComparisonMode, ComparisonSpec, Engine};

/// Largest count `k` with `k / total <= target`, evaluated in floating point
/// exactly as FAR values are.
pub(crate) fn max_count_within(target: f64, total: u64) -> u64 {
    let t = total as f64;
    let mut k = ((target * t).floor().max(0.0) as u64).min(total);
    while k < total && (k + 1) as f64 / t <= target {
        k += 1;
    }
    while k > 0 && k as f64 / t > target {
        k -= 1;
    }
    k
}

fn check_target(target: f64) -> Result<()> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Invalid(format!(
            "target FAR must lie in (0, 1], got {target}"
        )));
    }
    Ok(())
}

/// Pick the threshold from the `top` scores (descending, length `k + 1`,
/// or all scores when `k == total`).
pub(crate) fn threshold_from_top(top: &[f64], k: usize, total: usize) -> f64 {
    if k >= total {
        // every score may be accepted: the minimum observed score
        return *top.last().expect("non-empty");
    }
    let boundary = top[k];
    top[..k]
        .iter()
        .rev()
        .copied()
        .find(|&s| s > boundary)
        .unwrap_or_else(|| top[0].next_up())
}

/// Smallest threshold drawn from the observed scores (plus one ulp above
/// the maximum) whose FAR, under the `score >= t` convention, is at most
/// `target`.
pub fn threshold_for_far(engine: &Engine, spec: &ComparisonSpec<'_>, target: f64) -> Result<f64> {
    check_target(target)?;
    if spec.mode == ComparisonMode::WithinSetMated {
        return Err(Error::Invalid(
            "thresholds are set on non-mated comparisons".into(),
        ));
    }
    spec.validate()?;
    let total = spec.total_pairs();
    if total == 0 {
        return Err(Error::EmptyComparison("no non-mated comparisons".into()));
    }
    if target * (total as f64) < 1.0 {
        return Err(Error::BelowResolution(format!(
            "target FAR {target} needs at least {} comparisons, only {total} available",
            (1.0 / target).ceil()
        )));
    }
    let k = max_count_within(target, total);
    let keep = if k >= total { total } else { k + 1 };
    let top = engine.top_scores(spec, keep as usize)?;
    Ok(threshold_from_top(&top, k as usize, total as usize))
}

/// Same selection rule applied to an explicit score multiset.
pub fn threshold_for_far_in(scores: &[f64], target: f64) -> Result<f64> {
    check_target(target)?;
    if scores.is_empty() {
        return Err(Error::EmptyComparison("no scores".into()));
    }
    let total = scores.len() as u64;
    if target * (total as f64) < 1.0 {
        return Err(Error::BelowResolution(format!(
            "target FAR {target} needs more than {total} comparisons"
        )));
    }
    let k = max_count_within(target, total) as usize;
    let mut desc = scores.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    desc.truncate((k + 1).min(desc.len()));
    Ok(threshold_from_top(&desc, k, scores.len()))
}

/// Fraction of mated pairs scoring strictly below `t`.
pub fn frr_at_threshold(engine: &Engine, mated: &ComparisonSpec<'_>, t: f64) -> Result<f64> {
    if mated.mode != ComparisonMode::WithinSetMated {
        return Err(Error::Invalid(
            "FRR needs a within-set mated comparison".into(),
        ));
    }
    let (below, total) = engine.count_below(mated, t)?;
    if total == 0 {
        return Err(Error::EmptyComparison(format!(
            "{:?} has no mated pairs",
            mated.probe.name()
        )));
    }
    Ok(below as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub target_far: f64,
    pub threshold: f64,
    pub frr: f64,
}

/// FRR at the threshold where the non-mated comparison reaches `target_far`.
pub fn frr_at_far(
    engine: &Engine,
    mated: &ComparisonSpec<'_>,
    nonmated: &ComparisonSpec<'_>,
    target_far: f64,
) -> Result<OperatingPoint> {
    let threshold = threshold_for_far(engine, nonmated, target_far)?;
    let frr = frr_at_threshold(engine, mated, threshold)?;
    Ok(OperatingPoint {
        target_far,
        threshold,
        frr,
    })
}

/// Population size a matcher separates at an operating point: `1 / far`.
pub fn distinguishable_identities(far: f64) -> Result<f64> {
    if !(far > 0.0 && far.is_finite()) {
        return Err(Error::Invalid(format!("FAR must be positive, got {far}")));
    }
    Ok(1.0 / far)
}

/// Share of the real identity space spanned by synthetic identities,
/// `far_real / far_fake`.
pub fn mode_collapse_fraction(far_real: f64, far_fake: f64) -> Result<f64> {
    if !(far_real > 0.0 && far_fake > 0.0 && far_real.is_finite() && far_fake.is_finite()) {
        return Err(Error::Invalid(format!(
            "FAR values must be positive, got ({far_real}, {far_fake})"
        )));
    }
    Ok(far_real / far_fake)
}
