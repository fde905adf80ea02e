//! Blocked, parallel enumeration of comparison pairs.
//!
//! The pair space is cut into rectangular blocks of rows. Each rayon task
//! folds the pairs of its blocks into a private accumulator; accumulators
//! are then merged. Every accumulator used here is order-insensitive
//! (integer histograms, maxima, multisets), so results do not depend on the
//! worker count or block size.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::{dot, EmbeddingSet, ScoreScale};
use crate::error::{Error, Result};

use super::grid::ThresholdGrid;

pub const DEFAULT_BLOCK_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonMode {
    /// Unordered pairs of one labeled set whose labels differ.
    WithinSetNonMated,
    /// Every (probe, gallery) combination across two sets.
    BetweenSets,
    /// Unordered pairs of one labeled set sharing a label.
    WithinSetMated,
}

/// Which pairs to compare, and on which score scale.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonSpec<'a> {
    pub mode: ComparisonMode,
    pub probe: &'a EmbeddingSet,
    pub gallery: Option<&'a EmbeddingSet>,
    pub scale: ScoreScale,
}

impl<'a> ComparisonSpec<'a> {
    pub fn within_nonmated(set: &'a EmbeddingSet, scale: ScoreScale) -> Self {
        ComparisonSpec {
            mode: ComparisonMode::WithinSetNonMated,
            probe: set,
            gallery: None,
            scale,
        }
    }

    pub fn within_mated(set: &'a EmbeddingSet, scale: ScoreScale) -> Self {
        ComparisonSpec {
            mode: ComparisonMode::WithinSetMated,
            probe: set,
            gallery: None,
            scale,
        }
    }

    pub fn between(probe: &'a EmbeddingSet, gallery: &'a EmbeddingSet, scale: ScoreScale) -> Self {
        ComparisonSpec {
            mode: ComparisonMode::BetweenSets,
            probe,
            gallery: Some(gallery),
            scale,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !self.probe.is_normalized() {
            return Err(Error::Invalid(format!(
                "set {:?} must be normalized before comparison",
                self.probe.name()
            )));
        }
        match self.mode {
            ComparisonMode::WithinSetNonMated | ComparisonMode::WithinSetMated => {
                if self.probe.labels().is_none() {
                    return Err(Error::LabelsRequired(format!(
                        "within-set comparison of {:?}",
                        self.probe.name()
                    )));
                }
            }
            ComparisonMode::BetweenSets => {
                let gallery = self.gallery.ok_or_else(|| {
                    Error::Invalid("between-sets comparison needs a gallery set".into())
                })?;
                if !gallery.is_normalized() {
                    return Err(Error::Invalid(format!(
                        "set {:?} must be normalized before comparison",
                        gallery.name()
                    )));
                }
                if gallery.dim() != self.probe.dim() {
                    return Err(Error::DimMismatch {
                        left: self.probe.dim(),
                        right: gallery.dim(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Exact number of pairs in this comparison, from label counts alone.
    pub fn total_pairs(&self) -> u64 {
        let n = self.probe.len() as u64;
        let mated = || -> u64 {
            label_sizes(self.probe)
                .iter()
                .map(|&s| s as u64 * (s as u64).saturating_sub(1) / 2)
                .sum()
        };
        match self.mode {
            ComparisonMode::BetweenSets => n * self.gallery.map_or(0, |g| g.len() as u64),
            ComparisonMode::WithinSetNonMated => n * n.saturating_sub(1) / 2 - mated(),
            ComparisonMode::WithinSetMated => mated(),
        }
    }

    /// Rows of the other side of the comparison.
    pub(crate) fn partner_set(&self) -> &'a EmbeddingSet {
        self.gallery.unwrap_or(self.probe)
    }

    #[inline]
    pub(crate) fn score_rows(&self, i: usize, j: usize) -> f64 {
        self.scale
            .apply(dot(self.probe.row(i), self.partner_set().row(j)))
    }

    /// Whether the pair (probe i, partner j) belongs to the comparison.
    /// Within-set callers pass each unordered pair once.
    #[inline]
    pub(crate) fn qualifies(&self, ids: Option<&[u32]>, i: usize, j: usize) -> bool {
        match (self.mode, ids) {
            (ComparisonMode::BetweenSets, _) => true,
            (ComparisonMode::WithinSetNonMated, Some(ids)) => i != j && ids[i] != ids[j],
            (ComparisonMode::WithinSetMated, Some(ids)) => i != j && ids[i] == ids[j],
            _ => false,
        }
    }
}

fn label_sizes(set: &EmbeddingSet) -> Vec<usize> {
    let mut sizes = vec![0usize; set.identity_count().unwrap_or(0)];
    if let Some(ids) = set.label_ids() {
        for &id in ids {
            sizes[id as usize] += 1;
        }
    }
    sizes
}

/// Worker pool configuration for the pairwise engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Engine {
    workers: usize,
    block_size: usize,
}

impl Default for Engine {
    fn default() -> Self {
        Engine {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            block_size: DEFAULT_BLOCK_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Task {
    /// Rows `[a0, a1)` of the probe against rows `[b0, b1)` of the partner.
    Block {
        a0: usize,
        a1: usize,
        b0: usize,
        b1: usize,
    },
    /// All unordered pairs among the listed rows (one identity).
    Group(usize),
}

impl Engine {
    pub fn new(workers: usize, block_size: usize) -> Result<Self> {
        if workers == 0 || block_size == 0 {
            return Err(Error::Invalid(
                "worker count and block size must be positive".into(),
            ));
        }
        Ok(Engine {
            workers,
            block_size,
        })
    }

    pub fn single_threaded() -> Self {
        Engine {
            workers: 1,
            block_size: DEFAULT_BLOCK_SIZE,
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    fn install<T: Send>(&self, job: impl FnOnce() -> T + Send) -> T {
        if self.workers == 1 {
            return job();
        }
        match rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
        {
            Ok(pool) => pool.install(job),
            Err(_) => job(),
        }
    }

    fn blocks(&self, n: usize) -> Vec<(usize, usize)> {
        (0..n)
            .step_by(self.block_size)
            .map(|s| (s, (s + self.block_size).min(n)))
            .collect()
    }

    /// Fold every qualifying pair of `spec` into accumulators created by
    /// `init`, visiting `(acc, probe_row, partner_row, score)`, and merge them.
    pub(crate) fn fold_pairs<S, I, V, M>(
        &self,
        spec: &ComparisonSpec<'_>,
        init: I,
        visit: V,
        merge: M,
    ) -> Result<S>
    where
        S: Send,
        I: Fn() -> S + Sync + Send,
        V: Fn(&mut S, usize, usize, f64) + Sync + Send,
        M: Fn(S, S) -> S + Sync + Send,
    {
        spec.validate()?;
        let ids = spec.probe.label_ids();
        let groups: Vec<Vec<usize>>;
        let tasks: Vec<Task> = match spec.mode {
            ComparisonMode::WithinSetMated => {
                let mut by_label = vec![Vec::new(); spec.probe.identity_count().unwrap_or(0)];
                for (row, &id) in ids.unwrap_or(&[]).iter().enumerate() {
                    by_label[id as usize].push(row);
                }
                groups = by_label.into_iter().filter(|g| g.len() > 1).collect();
                (0..groups.len()).map(Task::Group).collect()
            }
            ComparisonMode::WithinSetNonMated => {
                groups = Vec::new();
                let blocks = self.blocks(spec.probe.len());
                let mut tasks = Vec::new();
                for (bi, &(a0, a1)) in blocks.iter().enumerate() {
                    for &(b0, b1) in &blocks[bi..] {
                        tasks.push(Task::Block { a0, a1, b0, b1 });
                    }
                }
                tasks
            }
            ComparisonMode::BetweenSets => {
                groups = Vec::new();
                let probe = self.blocks(spec.probe.len());
                let partner = self.blocks(spec.partner_set().len());
                let mut tasks = Vec::new();
                for &(a0, a1) in &probe {
                    for &(b0, b1) in &partner {
                        tasks.push(Task::Block { a0, a1, b0, b1 });
                    }
                }
                tasks
            }
        };
        let within = spec.mode != ComparisonMode::BetweenSets;
        let run_task = |mut acc: S, task: &Task| -> S {
            match *task {
                Task::Group(g) => {
                    let rows = &groups[g];
                    for (k, &i) in rows.iter().enumerate() {
                        for &j in &rows[k + 1..] {
                            visit(&mut acc, i, j, spec.score_rows(i, j));
                        }
                    }
                }
                Task::Block { a0, a1, b0, b1 } => {
                    for i in a0..a1 {
                        let start = if within { b0.max(i + 1) } else { b0 };
                        for j in start..b1 {
                            if spec.qualifies(ids, i, j) {
                                visit(&mut acc, i, j, spec.score_rows(i, j));
                            }
                        }
                    }
                }
            }
            acc
        };
        let out = self.install(|| tasks.par_iter().fold(&init, run_task).reduce(&init, &merge));
        Ok(out)
    }

    /// Per-probe maximum score over qualifying partners. Within a set, a
    /// row is never its own partner and same-label rows are skipped.
    pub(crate) fn nearest_scores(&self, spec: &ComparisonSpec<'_>) -> Result<Vec<f64>> {
        spec.validate()?;
        if spec.mode == ComparisonMode::WithinSetMated {
            return Err(Error::Invalid(
                "nearest-neighbour scores are defined for non-mated comparisons".into(),
            ));
        }
        let ids = spec.probe.label_ids();
        let partners = spec.partner_set().len();
        let blocks = self.blocks(spec.probe.len());
        let per_block: Vec<Vec<Option<f64>>> = self.install(|| {
            blocks
                .par_iter()
                .map(|&(a0, a1)| {
                    (a0..a1)
                        .map(|i| {
                            let mut best: Option<f64> = None;
                            for j in 0..partners {
                                if spec.qualifies(ids, i, j) {
                                    let s = spec.score_rows(i, j);
                                    best = Some(best.map_or(s, |b| b.max(s)));
                                }
                            }
                            best
                        })
                        .collect()
                })
                .collect()
        });
        per_block
            .into_iter()
            .flatten()
            .enumerate()
            .map(|(i, best)| {
                best.ok_or_else(|| {
                    let label = spec
                        .probe
                        .labels()
                        .map(|l| format!(" (label {:?})", l[i]))
                        .unwrap_or_default();
                    Error::EmptyComparison(format!(
                        "probe row {i}{label} of {:?} has no qualifying partner",
                        spec.probe.name()
                    ))
                })
            })
            .collect()
    }

    /// Per-threshold histogram of pair scores: bucket `k` counts scores
    /// with exactly `k` grid thresholds at or below them.
    pub(crate) fn histogram(
        &self,
        spec: &ComparisonSpec<'_>,
        grid: &ThresholdGrid,
    ) -> Result<Vec<u64>> {
        let buckets = grid.len() + 1;
        self.fold_pairs(
            spec,
            || vec![0u64; buckets],
            |acc, _, _, s| acc[grid.rank(s)] += 1,
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
    }

    /// Smallest and largest pair score, if any pair exists.
    pub fn score_range(&self, spec: &ComparisonSpec<'_>) -> Result<Option<(f64, f64)>> {
        self.fold_pairs(
            spec,
            || None,
            |acc: &mut Option<(f64, f64)>, _, _, s| {
                *acc = Some(acc.map_or((s, s), |(lo, hi)| (lo.min(s), hi.max(s))));
            },
            |a, b| match (a, b) {
                (Some((l1, h1)), Some((l2, h2))) => Some((l1.min(l2), h1.max(h2))),
                (x, None) | (None, x) => x,
            },
        )
    }

    /// The `m` largest pair scores, sorted descending.
    pub(crate) fn top_scores(&self, spec: &ComparisonSpec<'_>, m: usize) -> Result<Vec<f64>> {
        if m == 0 {
            return Ok(Vec::new());
        }
        let push = |heap: &mut BinaryHeap<Reverse<Ordered>>, s: f64| {
            if heap.len() < m {
                heap.push(Reverse(Ordered(s)));
            } else if let Some(Reverse(Ordered(low))) = heap.peek() {
                if s > *low {
                    heap.pop();
                    heap.push(Reverse(Ordered(s)));
                }
            }
        };
        let heap = self.fold_pairs(
            spec,
            BinaryHeap::new,
            |heap, _, _, s| push(heap, s),
            |mut a, b| {
                for Reverse(Ordered(s)) in b {
                    push(&mut a, s);
                }
                a
            },
        )?;
        let mut top: Vec<f64> = heap.into_iter().map(|Reverse(Ordered(s))| s).collect();
        top.sort_by(|a, b| b.total_cmp(a));
        Ok(top)
    }

    /// Count of pairs whose score is strictly below `t`, with the total.
    pub(crate) fn count_below(&self, spec: &ComparisonSpec<'_>, t: f64) -> Result<(u64, u64)> {
        self.fold_pairs(
            spec,
            || (0u64, 0u64),
            |acc, _, _, s| {
                acc.0 += u64::from(s < t);
                acc.1 += 1;
            },
            |a, b| (a.0 + b.0, a.1 + b.1),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ordered(f64);

impl Eq for Ordered {}

impl PartialOrd for Ordered {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ordered {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axes(labels: &[&str]) -> EmbeddingSet {
        let n = labels.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        EmbeddingSet::new(
            "axes",
            n,
            values,
            Some(labels.iter().map(|s| s.to_string()).collect()),
        )
        .unwrap()
        .normalize()
        .unwrap()
    }

    #[test]
    fn closed_form_totals() {
        let set = axes(&["a", "a", "a", "b", "b", "c"]);
        let s = ScoreScale::default();
        assert_eq!(ComparisonSpec::within_mated(&set, s).total_pairs(), 3 + 1);
        assert_eq!(
            ComparisonSpec::within_nonmated(&set, s).total_pairs(),
            15 - 4
        );
        assert_eq!(ComparisonSpec::between(&set, &set, s).total_pairs(), 36);
    }

    #[test]
    fn enumerated_pairs_match_closed_form() {
        let set = axes(&["a", "a", "a", "b", "b", "c", "d"]);
        let s = ScoreScale::default();
        for engine in [Engine::new(1, 1).unwrap(), Engine::new(2, 3).unwrap()] {
            for spec in [
                ComparisonSpec::within_mated(&set, s),
                ComparisonSpec::within_nonmated(&set, s),
                ComparisonSpec::between(&set, &set, s),
            ] {
                let (_, n) = engine.count_below(&spec, 0.5).unwrap();
                assert_eq!(n, spec.total_pairs());
            }
        }
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let raw = EmbeddingSet::new("r", 2, vec![1.0, 2.0, 3.0, 4.0], None).unwrap();
        let spec = ComparisonSpec::between(&raw, &raw, ScoreScale::default());
        assert!(matches!(spec.validate(), Err(Error::Invalid(_))));
    }

    #[test]
    fn within_mode_needs_labels() {
        let set = EmbeddingSet::new("u", 2, vec![1.0, 0.0, 0.0, 1.0], None)
            .unwrap()
            .normalize()
            .unwrap();
        let spec = ComparisonSpec::within_nonmated(&set, ScoreScale::default());
        assert!(matches!(spec.validate(), Err(Error::LabelsRequired(_))));
    }

    #[test]
    fn top_scores_are_sorted_and_exact() {
        let set = EmbeddingSet::new(
            "t",
            2,
            vec![1.0, 0.0, 0.6, 0.8, 0.0, 1.0, 0.8, 0.6],
            Some(vec!["a".into(), "b".into(), "c".into(), "d".into()]),
        )
        .unwrap()
        .normalize()
        .unwrap();
        let spec = ComparisonSpec::within_nonmated(&set, ScoreScale::default());
        let top = Engine::new(2, 1).unwrap().top_scores(&spec, 3).unwrap();
        assert_eq!(top.len(), 3);
        assert!(top.windows(2).all(|w| w[0] >= w[1]));
        assert!((top[0] - 0.96).abs() < 1e-12);
    }
}
