//! Reference implementations: single-threaded double loops over every
//! ordered index pair, with counts taken from a sorted score list. They
//! share nothing with the blocked engine except the scoring function.

use crate::embeddings::{dot, EmbeddingSet};
use crate::error::{Error, Result};

use super::curves::{FarCurve, FrrCurve};
use super::engine::{ComparisonMode, ComparisonSpec};
use super::grid::ThresholdGrid;

fn scores_of(spec: &ComparisonSpec<'_>) -> Result<Vec<f64>> {
    spec.validate()?;
    let probe = spec.probe;
    let mut scores = Vec::new();
    match spec.mode {
        ComparisonMode::BetweenSets => {
            let gallery = spec.gallery.expect("validated");
            for i in 0..probe.len() {
                for j in 0..gallery.len() {
                    scores.push(spec.scale.apply(dot(probe.row(i), gallery.row(j))));
                }
            }
        }
        ComparisonMode::WithinSetNonMated | ComparisonMode::WithinSetMated => {
            let labels = probe.labels().expect("validated");
            let mated = spec.mode == ComparisonMode::WithinSetMated;
            for i in 0..probe.len() {
                for j in 0..probe.len() {
                    if i < j && (labels[i] == labels[j]) == mated {
                        scores.push(spec.scale.apply(dot(probe.row(i), probe.row(j))));
                    }
                }
            }
        }
    }
    Ok(scores)
}

fn sorted(mut scores: Vec<f64>) -> Vec<f64> {
    scores.sort_by(f64::total_cmp);
    scores
}

fn at_least(sorted: &[f64], t: f64) -> u64 {
    (sorted.len() - sorted.partition_point(|&s| s < t)) as u64
}

pub fn far_curve_naive(spec: &ComparisonSpec<'_>, grid: &ThresholdGrid) -> Result<FarCurve> {
    if spec.mode == ComparisonMode::WithinSetMated {
        return Err(Error::Invalid("FAR needs a non-mated comparison".into()));
    }
    let scores = sorted(scores_of(spec)?);
    if scores.is_empty() {
        return Err(Error::EmptyComparison("no non-mated comparisons".into()));
    }
    Ok(FarCurve {
        grid: grid.clone(),
        counts: grid
            .values()
            .iter()
            .map(|&t| at_least(&scores, t))
            .collect(),
        total: scores.len() as u64,
    })
}

pub fn frr_curve_naive(spec: &ComparisonSpec<'_>, grid: &ThresholdGrid) -> Result<FrrCurve> {
    if spec.mode != ComparisonMode::WithinSetMated {
        return Err(Error::Invalid("FRR needs a mated comparison".into()));
    }
    let scores = sorted(scores_of(spec)?);
    if scores.is_empty() {
        return Err(Error::EmptyComparison("no mated pairs".into()));
    }
    let total = scores.len() as u64;
    Ok(FrrCurve {
        grid: grid.clone(),
        counts: grid
            .values()
            .iter()
            .map(|&t| total - at_least(&scores, t))
            .collect(),
        total,
    })
}

/// Per-probe best non-mated score by exhaustive search.
pub fn nearest_scores_naive(spec: &ComparisonSpec<'_>) -> Result<Vec<f64>> {
    spec.validate()?;
    let probe: &EmbeddingSet = spec.probe;
    let (partners, within) = match spec.mode {
        ComparisonMode::BetweenSets => (spec.gallery.expect("validated"), false),
        ComparisonMode::WithinSetNonMated => (probe, true),
        ComparisonMode::WithinSetMated => {
            return Err(Error::Invalid(
                "NN scores need a non-mated comparison".into(),
            ))
        }
    };
    let labels = probe.labels();
    (0..probe.len())
        .map(|i| {
            let mut best = f64::NEG_INFINITY;
            let mut found = false;
            for j in 0..partners.len() {
                if within {
                    let labels = labels.expect("validated");
                    if i == j || labels[i] == labels[j] {
                        continue;
                    }
                }
                found = true;
                best = best.max(spec.scale.apply(dot(probe.row(i), partners.row(j))));
            }
            if found {
                Ok(best)
            } else {
                Err(Error::EmptyComparison(format!(
                    "probe row {i} has no partner"
                )))
            }
        })
        .collect()
}

pub fn nn_far_curve_naive(spec: &ComparisonSpec<'_>, grid: &ThresholdGrid) -> Result<FarCurve> {
    let nearest = sorted(nearest_scores_naive(spec)?);
    Ok(FarCurve {
        grid: grid.clone(),
        counts: grid
            .values()
            .iter()
            .map(|&t| at_least(&nearest, t))
            .collect(),
        total: nearest.len() as u64,
    })
}

/// Every pair score of a comparison, sorted ascending.
pub fn sorted_scores_naive(spec: &ComparisonSpec<'_>) -> Result<Vec<f64>> {
    Ok(sorted(scores_of(spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::ScoreScale;

    #[test]
    fn single_row_within_set_is_empty() {
        let s = EmbeddingSet::new("one", 2, vec![1., 0.], Some(vec!["a".into()]))
            .unwrap()
            .normalize()
            .unwrap();
        let spec = ComparisonSpec::within_nonmated(&s, ScoreScale::default());
        let grid = ThresholdGrid::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            far_curve_naive(&spec, &grid),
            Err(Error::EmptyComparison(_))
        ));
    }

    #[test]
    fn two_points_between_themselves() {
        let s = EmbeddingSet::new("two", 2, vec![1., 0., 0., 1.], None)
            .unwrap()
            .normalize()
            .unwrap();
        let spec = ComparisonSpec::between(&s, &s, ScoreScale::default());
        let grid = ThresholdGrid::new(vec![0.0, 1.0]).unwrap();
        let c = far_curve_naive(&spec, &grid).unwrap();
        assert_eq!(c.total, 4);
        assert_eq!(c.counts, vec![4, 2]);
    }
}
