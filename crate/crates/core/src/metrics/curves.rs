use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

use super::engine::{ComparisonMode, ComparisonSpec, Engine};
use super::grid::ThresholdGrid;

/// False acceptance rates along a threshold grid. `counts[i]` is the number
/// of comparisons scoring at or above `grid[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FarCurve {
    #[serde(skip)]
    pub grid: ThresholdGrid,
    pub counts: Vec<u64>,
    pub total: u64,
}

/// False rejection rates along a threshold grid. `counts[i]` is the number
/// of mated comparisons scoring strictly below `grid[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrrCurve {
    #[serde(skip)]
    pub grid: ThresholdGrid,
    pub counts: Vec<u64>,
    pub total: u64,
}

/// (FAR, FRR) operating points, one per grid threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub grid: ThresholdGrid,
    pub points: Vec<(f64, f64)>,
}

fn rates(counts: &[u64], total: u64) -> Vec<f64> {
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

fn write_rate_csv<W: Write>(
    mut w: W,
    grid: &ThresholdGrid,
    counts: &[u64],
    total: u64,
) -> std::io::Result<()> {
    writeln!(w, "threshold,count,total,rate")?;
    for (t, &c) in grid.values().iter().zip(counts) {
        writeln!(w, "{t},{c},{total},{:.9e}", c as f64 / total as f64)?;
    }
    Ok(())
}

impl FarCurve {
    pub(crate) fn from_histogram(grid: ThresholdGrid, buckets: &[u64]) -> Result<Self> {
        let total: u64 = buckets.iter().sum();
        if total == 0 {
            return Err(Error::EmptyComparison("no non-mated comparisons".into()));
        }
        // counts[i] = number of scores with rank > i
        let mut counts = vec![0u64; grid.len()];
        let mut running = 0u64;
        for i in (0..grid.len()).rev() {
            running += buckets[i + 1];
            counts[i] = running;
        }
        Ok(FarCurve {
            grid,
            counts,
            total,
        })
    }

    pub fn far(&self) -> Vec<f64> {
        rates(&self.counts, self.total)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_rate_csv(w, &self.grid, &self.counts, self.total)
    }
}

impl FrrCurve {
    pub fn frr(&self) -> Vec<f64> {
        rates(&self.counts, self.total)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_rate_csv(w, &self.grid, &self.counts, self.total)
    }
}

impl RocCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "threshold,far,frr")?;
        for (t, (far, frr)) in self.grid.values().iter().zip(&self.points) {
            writeln!(w, "{t},{far:.9e},{frr:.9e}")?;
        }
        Ok(())
    }
}

fn require_nonmated(spec: &ComparisonSpec<'_>) -> Result<()> {
    if spec.mode == ComparisonMode::WithinSetMated {
        return Err(Error::Invalid(
            "FAR needs a non-mated or between-sets comparison".into(),
        ));
    }
    Ok(())
}

fn require_mated(spec: &ComparisonSpec<'_>) -> Result<()> {
    if spec.mode != ComparisonMode::WithinSetMated {
        return Err(Error::Invalid(
            "FRR needs a within-set mated comparison".into(),
        ));
    }
    Ok(())
}

/// All-pairs FAR curve computed by the blocked parallel engine.
pub fn far_curve(
    engine: &Engine,
    spec: &ComparisonSpec<'_>,
    grid: &ThresholdGrid,
) -> Result<FarCurve> {
    require_nonmated(spec)?;
    let buckets = engine.histogram(spec, grid)?;
    FarCurve::from_histogram(grid.clone(), &buckets)
}

/// Nearest-neighbour FAR: the fraction of probes whose best qualifying
/// partner scores at or above each threshold.
pub fn nn_far_curve(
    engine: &Engine,
    spec: &ComparisonSpec<'_>,
    grid: &ThresholdGrid,
) -> Result<FarCurve> {
    require_nonmated(spec)?;
    let nearest = engine.nearest_scores(spec)?;
    let mut buckets = vec![0u64; grid.len() + 1];
    for s in nearest {
        buckets[grid.rank(s)] += 1;
    }
    FarCurve::from_histogram(grid.clone(), &buckets)
}

/// FRR curve over every unordered same-label pair.
pub fn frr_curve(
    engine: &Engine,
    spec: &ComparisonSpec<'_>,
    grid: &ThresholdGrid,
) -> Result<FrrCurve> {
    require_mated(spec)?;
    let buckets = engine.histogram(spec, grid)?;
    let total: u64 = buckets.iter().sum();
    if total == 0 {
        return Err(Error::EmptyComparison(format!(
            "{:?} has no mated pairs",
            spec.probe.name()
        )));
    }
    // scores below grid[i] are those with rank <= i
    let mut counts = vec![0u64; grid.len()];
    let mut running = 0u64;
    for (i, count) in counts.iter_mut().enumerate() {
        running += buckets[i];
        *count = running;
    }
    Ok(FrrCurve {
        grid: grid.clone(),
        counts,
        total,
    })
}

pub fn roc_curve(
    engine: &Engine,
    mated: &ComparisonSpec<'_>,
    nonmated: &ComparisonSpec<'_>,
    grid: &ThresholdGrid,
) -> Result<RocCurve> {
    let far = far_curve(engine, nonmated, grid)?.far();
    let frr = frr_curve(engine, mated, grid)?.frr();
    Ok(RocCurve {
        grid: grid.clone(),
        points: far.into_iter().zip(frr).collect(),
    })
}

/// Grid of `points` thresholds spanning the observed scores of `spec`.
pub fn default_grid(
    engine: &Engine,
    specs: &[ComparisonSpec<'_>],
    points: usize,
) -> Result<ThresholdGrid> {
    let mut range: Option<(f64, f64)> = None;
    for spec in specs {
        if let Some((lo, hi)) = engine.score_range(spec)? {
            range = Some(range.map_or((lo, hi), |(a, b)| (a.min(lo), b.max(hi))));
        }
    }
    let (lo, hi) =
        range.ok_or_else(|| Error::EmptyComparison("no comparisons to span a grid".into()))?;
    ThresholdGrid::spanning(lo, hi, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{EmbeddingSet, ScoreScale};

    fn set(values: Vec<f64>, dim: usize, labels: &[&str]) -> EmbeddingSet {
        EmbeddingSet::new(
            "s",
            dim,
            values,
            Some(labels.iter().map(|l| l.to_string()).collect()),
        )
        .unwrap()
        .normalize()
        .unwrap()
    }

    fn grid(v: &[f64]) -> ThresholdGrid {
        ThresholdGrid::new(v.to_vec()).unwrap()
    }

    #[test]
    fn orthogonal_points_never_exceed_half() {
        let s = set(
            vec![1., 0., 0., 0., 1., 0., 0., 0., 1.],
            3,
            &["a", "b", "c"],
        );
        let spec = ComparisonSpec::within_nonmated(&s, ScoreScale::default());
        let c = far_curve(&Engine::default(), &spec, &grid(&[0.5, 0.9])).unwrap();
        assert_eq!(c.total, 3);
        assert_eq!(c.counts, vec![0, 0]);
    }

    #[test]
    fn threshold_at_minimum_accepts_everything() {
        let s = set(vec![1., 0., 0.6, 0.8, 0.8, 0.6], 2, &["a", "b", "c"]);
        let spec = ComparisonSpec::within_nonmated(&s, ScoreScale::default());
        let min = Engine::default().score_range(&spec).unwrap().unwrap().0;
        let c = far_curve(&Engine::default(), &spec, &grid(&[min, 2.0])).unwrap();
        assert_eq!(c.far()[0], 1.0);
    }

    #[test]
    fn single_row_has_no_comparisons() {
        let s = set(vec![1., 0.], 2, &["a"]);
        let spec = ComparisonSpec::within_nonmated(&s, ScoreScale::default());
        assert!(matches!(
            far_curve(&Engine::default(), &spec, &grid(&[0., 1.])),
            Err(Error::EmptyComparison(_))
        ));
    }

    #[test]
    fn nn_with_exact_copies_is_always_accepted() {
        let s = set(vec![1., 0., 0.6, 0.8, -0.2, 0.9], 2, &["a", "b", "c"]);
        let spec = ComparisonSpec::between(&s, &s, ScoreScale::default());
        let c = nn_far_curve(&Engine::default(), &spec, &grid(&[0.0, 0.5, 1.0])).unwrap();
        assert_eq!(c.total, 3);
        assert_eq!(c.far(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn nn_with_negative_scores_rejects_all() {
        let s = set(vec![1., 0., -1., 0.1], 2, &["a", "b"]);
        let spec = ComparisonSpec::within_nonmated(&s, ScoreScale::default());
        let c = nn_far_curve(&Engine::default(), &spec, &grid(&[0.5, 0.6])).unwrap();
        assert_eq!(c.counts, vec![0, 0]);
    }

    #[test]
    fn nn_probe_without_partner_is_named() {
        let s = set(vec![1., 0., 0., 1.], 2, &["a", "a"]);
        let spec = ComparisonSpec::within_nonmated(&s, ScoreScale::default());
        let err = nn_far_curve(&Engine::default(), &spec, &grid(&[0.5, 0.6])).unwrap_err();
        assert!(err.to_string().contains("probe row 0"), "{err}");
    }

    #[test]
    fn duplicate_mated_rows_are_accepted() {
        let s = set(vec![0.6, 0.8, 0.6, 0.8], 2, &["a", "a"]);
        let spec = ComparisonSpec::within_mated(&s, ScoreScale::default());
        let c = frr_curve(&Engine::default(), &spec, &grid(&[0.99, 1.5])).unwrap();
        assert_eq!(c.total, 1);
        assert_eq!(c.frr(), vec![0.0, 1.0]);
    }

    #[test]
    fn frr_needs_mated_pairs() {
        let s = set(vec![1., 0., 0., 1.], 2, &["a", "b"]);
        let spec = ComparisonSpec::within_mated(&s, ScoreScale::default());
        assert!(matches!(
            frr_curve(&Engine::default(), &spec, &grid(&[0.5, 0.6])),
            Err(Error::EmptyComparison(_))
        ));
    }

    #[test]
    fn roc_of_separated_classes_reaches_origin() {
        // two tight identities far apart
        let s = set(
            vec![1., 0.01, 1., -0.01, -0.01, 1., 0.01, 1.],
            2,
            &["a", "a", "b", "b"],
        );
        let scale = ScoreScale::default();
        let roc = roc_curve(
            &Engine::default(),
            &ComparisonSpec::within_mated(&s, scale),
            &ComparisonSpec::within_nonmated(&s, scale),
            &grid(&[-1.0, 0.5, 1.5]),
        )
        .unwrap();
        assert_eq!(roc.points[0], (1.0, 0.0));
        assert!(roc.points.contains(&(0.0, 0.0)));
    }

    #[test]
    fn csv_layout() {
        let c = FarCurve {
            grid: grid(&[0.25, 0.5]),
            counts: vec![2, 1],
            total: 3,
        };
        let mut out = Vec::new();
        c.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "threshold,count,total,rate\n0.25,2,3,6.666666667e-1\n0.5,1,3,3.333333333e-1\n"
        );
    }
}
