use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingSet, ScoreScale};
use crate::error::{Error, Result};
use crate::metrics::{ComparisonSpec, Engine};

/// Cross-identity pairs of a real set whose scores fall in the top
/// `quantile` of all cross-identity scores. Pairs are `(i, j)` with `i < j`,
/// sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardNegativePool {
    pub pairs: Vec<(usize, usize)>,
    /// Smallest retained score.
    pub cutoff: f64,
}

impl HardNegativePool {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Keep every cross-label pair scoring at least the `ceil(quantile * T)`-th
/// largest of the `T` cross-label scores. Ties at the cutoff are all kept.
pub fn build_negative_pool(
    engine: &Engine,
    real: &EmbeddingSet,
    quantile: f64,
    scale: ScoreScale,
) -> Result<HardNegativePool> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::Invalid(format!(
            "pool quantile must lie in (0, 1), got {quantile}"
        )));
    }
    if real.labels().is_none() {
        return Err(Error::LabelsRequired(
            "negative pool needs labeled real data".into(),
        ));
    }
    let spec = ComparisonSpec::within_nonmated(real, scale);
    let total = spec.total_pairs();
    if total == 0 {
        return Err(Error::EmptyComparison(
            "negative pool needs at least two identities".into(),
        ));
    }
    let keep = ((quantile * total as f64).ceil() as u64).clamp(1, total) as usize;
    let top = engine.top_scores(&spec, keep)?;
    let cutoff = top[keep - 1];
    let mut pairs = engine.fold_pairs(
        &spec,
        Vec::new,
        |acc: &mut Vec<(usize, usize)>, i, j, s| {
            if s >= cutoff {
                acc.push((i, j));
            }
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    )?;
    pairs.sort_unstable();
    Ok(HardNegativePool { pairs, cutoff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::dot;
    use crate::synthgen::{gen_identity_clouds, MixtureSpec};

    #[test]
    fn single_cross_pair() {
        let set = EmbeddingSet::new(
            "o",
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            Some(vec!["a".into(), "b".into()]),
        )
        .unwrap()
        .assume_normalized()
        .unwrap();
        let pool =
            build_negative_pool(&Engine::single_threaded(), &set, 0.5, ScoreScale::default())
                .unwrap();
        assert_eq!(pool.pairs, vec![(0, 1)]);
        assert_eq!(pool.cutoff, 0.0);
    }

    #[test]
    fn matches_sorted_cutoff() {
        let set = gen_identity_clouds(&MixtureSpec {
            k: 30,
            m: 4,
            dim: 8,
            within_sigma: 0.3,
            seed: 2,
        })
        .unwrap();
        let q = 0.05;
        let pool =
            build_negative_pool(&Engine::new(2, 16).unwrap(), &set, q, ScoreScale::default())
                .unwrap();
        let labels = set.labels().unwrap();
        let mut cross = Vec::new();
        for i in 0..set.len() {
            for j in i + 1..set.len() {
                if labels[i] != labels[j] {
                    cross.push(dot(set.row(i), set.row(j)));
                }
            }
        }
        cross.sort_by(|a, b| b.total_cmp(a));
        let keep = (q * cross.len() as f64).ceil() as usize;
        assert_eq!(pool.cutoff, cross[keep - 1]);
        assert_eq!(
            pool.len(),
            cross.iter().filter(|&&s| s >= pool.cutoff).count()
        );
        for &(i, j) in &pool.pairs {
            assert!(i < j);
            assert_ne!(labels[i], labels[j]);
            assert!(dot(set.row(i), set.row(j)) >= pool.cutoff);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let set = EmbeddingSet::new("u", 2, vec![1.0, 0.0, 0.0, 1.0], None)
            .unwrap()
            .assume_normalized()
            .unwrap();
        let engine = Engine::single_threaded();
        assert!(matches!(
            build_negative_pool(&engine, &set, 0.5, ScoreScale::default()),
            Err(Error::LabelsRequired(_))
        ));
        let one = set.with_labels(vec!["a".into(), "a".into()]).unwrap();
        assert!(build_negative_pool(&engine, &one, 0.5, ScoreScale::default()).is_err());
        assert!(build_negative_pool(&engine, &one, 1.0, ScoreScale::default()).is_err());
    }
}
