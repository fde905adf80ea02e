mod common;

use common::random_labeled_set;
use idgap::embeddings::dot;
use idgap::metrics::naive::{frr_curve_naive, nn_far_curve_naive, sorted_scores_naive};
use idgap::metrics::*;
use idgap::{EmbeddingSet, ScoreScale};
use proptest::prelude::*;

fn grid_for(engine: &Engine, specs: &[ComparisonSpec<'_>]) -> ThresholdGrid {
    default_grid(engine, specs, DEFAULT_GRID_POINTS).unwrap()
}

#[test]
fn engine_matches_naive_oracle_on_small_sets() {
    let engine = Engine::new(3, 7).unwrap();
    let scale = ScoreScale::default();
    for (seed, n) in [(1u64, 10usize), (2, 37), (3, 150)] {
        let a = random_labeled_set(n, 6, n / 3 + 1, seed);
        let b = random_labeled_set(n + 5, 6, 4, seed + 50);
        let specs = [
            ComparisonSpec::within_nonmated(&a, scale),
            ComparisonSpec::between(&a, &b, scale),
        ];
        let mated = ComparisonSpec::within_mated(&a, scale);
        let grid = grid_for(&engine, &specs);
        for spec in &specs {
            assert_eq!(
                far_curve(&engine, spec, &grid).unwrap(),
                far_curve_naive(spec, &grid).unwrap()
            );
            assert_eq!(
                nn_far_curve(&engine, spec, &grid).unwrap(),
                nn_far_curve_naive(spec, &grid).unwrap()
            );
        }
        assert_eq!(
            frr_curve(&engine, &mated, &grid).unwrap(),
            frr_curve_naive(&mated, &grid).unwrap()
        );
    }
}

#[test]
fn threshold_selection_matches_sorted_scores() {
    let engine = Engine::new(2, 16).unwrap();
    let set = random_labeled_set(300, 5, 60, 8);
    let spec = ComparisonSpec::within_nonmated(&set, ScoreScale::default());
    let sorted = sorted_scores_naive(&spec).unwrap();
    let total = sorted.len() as f64;
    for target in [1e-4, 1e-3, 0.01, 0.1, 0.5] {
        let t = threshold_for_far(&engine, &spec, target).unwrap();
        let far = sorted.iter().filter(|&&s| s >= t).count() as f64 / total;
        assert!(far <= target, "target {target}: far {far}");
        // any lower observed score would exceed the target
        let below = sorted.iter().rev().find(|&&s| s < t).copied();
        if let Some(b) = below {
            let far_b = sorted.iter().filter(|&&s| s >= b).count() as f64 / total;
            assert!(far_b > target);
        }
    }
}

#[test]
fn unlabeled_within_mode_is_rejected() {
    let set = EmbeddingSet::new("u", 2, vec![1.0, 0.0, 0.0, 1.0], None)
        .unwrap()
        .assume_normalized()
        .unwrap();
    let engine = Engine::single_threaded();
    let grid = ThresholdGrid::uniform(-1.0, 1.0, 5).unwrap();
    let err = far_curve(
        &engine,
        &ComparisonSpec::within_nonmated(&set, ScoreScale::default()),
        &grid,
    )
    .unwrap_err();
    assert!(err.to_string().contains("labels required"), "{err}");
}

fn arb_set(max_n: usize) -> impl Strategy<Value = EmbeddingSet> {
    (3..=max_n, 2usize..6, 2usize..5, any::<u64>())
        .prop_map(|(n, dim, ids, seed)| random_labeled_set(n, dim, ids.min(n), seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scores_are_symmetric(set in arb_set(20)) {
        for i in 0..set.len() {
            for j in 0..set.len() {
                prop_assert_eq!(dot(set.row(i), set.row(j)), dot(set.row(j), set.row(i)));
            }
        }
    }

    #[test]
    fn affine_scale_preserves_counts(set in arb_set(40), alpha in 0.25f64..8.0, beta in -2.0f64..2.0) {
        let engine = Engine::single_threaded();
        let plain = ComparisonSpec::within_nonmated(&set, ScoreScale::default());
        let scale = ScoreScale::new(alpha, beta).unwrap();
        let scaled = ComparisonSpec::within_nonmated(&set, scale);
        let grid = ThresholdGrid::uniform(-0.95, 0.95, 64).unwrap();
        let moved = grid.rescaled(alpha, beta).unwrap();
        let a = far_curve(&engine, &plain, &grid).unwrap();
        let b = far_curve(&engine, &scaled, &moved).unwrap();
        prop_assert_eq!(a.counts, b.counts);
    }

    #[test]
    fn curves_are_monotone(set in arb_set(40)) {
        let engine = Engine::single_threaded();
        let scale = ScoreScale::default();
        let nonmated = ComparisonSpec::within_nonmated(&set, scale);
        let grid = ThresholdGrid::uniform(-1.0, 1.0, 33).unwrap();
        if nonmated.total_pairs() > 0 {
            let far = far_curve(&engine, &nonmated, &grid).unwrap().far();
            prop_assert!(far.windows(2).all(|w| w[0] >= w[1]));
        }
        if let Ok(frr) = frr_curve(&engine, &ComparisonSpec::within_mated(&set, scale), &grid) {
            prop_assert!(frr.frr().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn counts_ignore_workers_and_blocks(set in arb_set(60), workers in 1usize..4, block in 1usize..20) {
        let spec = ComparisonSpec::within_nonmated(&set, ScoreScale::default());
        let grid = ThresholdGrid::uniform(-1.0, 1.0, 17).unwrap();
        let reference = far_curve(&Engine::single_threaded(), &spec, &grid).unwrap();
        let other = far_curve(&Engine::new(workers, block).unwrap(), &spec, &grid).unwrap();
        prop_assert_eq!(reference, other);
    }
}
