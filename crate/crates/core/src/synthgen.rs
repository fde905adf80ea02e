//! Seeded synthetic identity worlds on the unit sphere, with injectable
//! memorization and mode collapse for the synthetic side.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};

/// `k` identities with `m` rows each. Centers are uniform on the unit
/// sphere; rows are center plus isotropic Gaussian noise, renormalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub k: usize,
    pub m: usize,
    pub dim: usize,
    pub within_sigma: f64,
    pub seed: u64,
}

/// Pathologies injected into a synthetic set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathologySpec {
    /// Fraction of synthetic rows copied from real rows.
    #[serde(default)]
    pub memorize_fraction: f64,
    /// Gaussian perturbation applied to copied rows.
    #[serde(default)]
    pub perturb_eps: f64,
    /// Number of centers the non-copied rows collapse onto.
    #[serde(default)]
    pub collapse_k: Option<usize>,
    /// Spread of non-copied rows around their (collapsed or fresh) center.
    #[serde(default = "default_spread")]
    pub spread: f64,
}

fn default_spread() -> f64 {
    0.1
}

impl Default for PathologySpec {
    fn default() -> Self {
        PathologySpec {
            memorize_fraction: 0.0,
            perturb_eps: 0.0,
            collapse_k: None,
            spread: default_spread(),
        }
    }
}

impl PathologySpec {
    pub fn honest() -> Self {
        Self::default()
    }

    pub fn memorizing(fraction: f64, eps: f64) -> Self {
        PathologySpec {
            memorize_fraction: fraction,
            perturb_eps: eps,
            ..Self::default()
        }
    }

    pub fn collapsed(k: usize, spread: f64) -> Self {
        PathologySpec {
            collapse_k: Some(k),
            spread,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.memorize_fraction) {
            return Err(Error::Invalid(format!(
                "memorize_fraction must lie in [0, 1], got {}",
                self.memorize_fraction
            )));
        }
        if !(self.perturb_eps >= 0.0 && self.perturb_eps.is_finite()) {
            return Err(Error::Invalid(format!(
                "perturb_eps must be >= 0, got {}",
                self.perturb_eps
            )));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::Invalid(format!(
                "spread must be >= 0, got {}",
                self.spread
            )));
        }
        if self.collapse_k == Some(0) {
            return Err(Error::Invalid("collapse_k must be positive".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn uniform_on_sphere(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, dim);
        if v.iter().any(|&x| x != 0.0) {
            return unit(v);
        }
    }
}

/// `center + N(0, sigma^2 I)`, renormalized. With `sigma == 0` the center is
/// returned untouched.
fn jitter(rng: &mut ChaCha8Rng, center: &[f64], sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return center.to_vec();
    }
    loop {
        let v: Vec<f64> = center
            .iter()
            .map(|c| c + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if v.iter().any(|&x| x != 0.0) {
            return unit(v);
        }
    }
}

/// Labeled identity clouds, identity-major row order, labels `id0..id{k-1}`.
pub fn gen_identity_clouds(spec: &MixtureSpec) -> Result<EmbeddingSet> {
    if spec.k < 2 || spec.m < 1 {
        return Err(Error::Invalid(format!(
            "need k >= 2 and m >= 1, got k={} m={}",
            spec.k, spec.m
        )));
    }
    if !(spec.within_sigma >= 0.0 && spec.within_sigma.is_finite()) {
        return Err(Error::Invalid(format!(
            "within_sigma must be >= 0, got {}",
            spec.within_sigma
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(spec.k * spec.m * spec.dim);
    let mut labels = Vec::with_capacity(spec.k * spec.m);
    for id in 0..spec.k {
        let center = uniform_on_sphere(&mut rng, spec.dim);
        for _ in 0..spec.m {
            values.extend(jitter(&mut rng, &center, spec.within_sigma));
            labels.push(format!("id{id}"));
        }
    }
    EmbeddingSet::new(
        format!("mixture-k{}-m{}-s{}", spec.k, spec.m, spec.seed),
        spec.dim,
        values,
        Some(labels),
    )?
    .assume_normalized()
}

/// Unlabeled synthetic set of `n_fake` rows. The first
/// `round(memorize_fraction * n_fake)` rows are perturbed copies of random
/// real rows; the rest are drawn around `collapse_k` shared centers, or are
/// fresh independent identities when no collapse is configured.
pub fn make_fake_set(
    real: &EmbeddingSet,
    pathology: &PathologySpec,
    n_fake: usize,
    seed: u64,
) -> Result<EmbeddingSet> {
    pathology.validate()?;
    if n_fake == 0 {
        return Err(Error::Invalid("n_fake must be positive".into()));
    }
    if !real.is_normalized() {
        return Err(Error::Invalid("real set must be normalized".into()));
    }
    let dim = real.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let memorized = ((pathology.memorize_fraction * n_fake as f64).round() as usize).min(n_fake);
    let mut values = Vec::with_capacity(n_fake * dim);
    for _ in 0..memorized {
        let src = rng.random_range(0..real.len());
        values.extend(jitter(&mut rng, real.row(src), pathology.perturb_eps));
    }
    let centers: Vec<Vec<f64>> = (0..pathology.collapse_k.unwrap_or(0))
        .map(|_| uniform_on_sphere(&mut rng, dim))
        .collect();
    for _ in memorized..n_fake {
        let row = if centers.is_empty() {
            let center = uniform_on_sphere(&mut rng, dim);
            jitter(&mut rng, &center, pathology.spread)
        } else {
            let c = rng.random_range(0..centers.len());
            jitter(&mut rng, &centers[c], pathology.spread)
        };
        values.extend(row);
    }
    EmbeddingSet::new(format!("fake-s{seed}"), dim, values, None)?.assume_normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{dot, ScoreScale};
    use crate::metrics::{nn_far_curve, ComparisonSpec, Engine, ThresholdGrid};

    fn spec(k: usize, m: usize, dim: usize, sigma: f64, seed: u64) -> MixtureSpec {
        MixtureSpec {
            k,
            m,
            dim,
            within_sigma: sigma,
            seed,
        }
    }

    #[test]
    fn zero_sigma_rows_are_their_centers() {
        let set = gen_identity_clouds(&spec(2, 1, 5, 0.0, 1)).unwrap();
        assert_eq!(set.len(), 2);
        for row in set.rows() {
            assert!((dot(row, row) - 1.0).abs() < 1e-12);
        }
        let dup = gen_identity_clouds(&spec(2, 3, 5, 0.0, 1)).unwrap();
        assert_eq!(dup.row(0), dup.row(2));
        assert_eq!(dup.row(0), set.row(0));
    }

    #[test]
    fn same_seed_same_set() {
        let a = gen_identity_clouds(&spec(10, 3, 8, 0.2, 9)).unwrap();
        let b = gen_identity_clouds(&spec(10, 3, 8, 0.2, 9)).unwrap();
        assert_eq!(a, b);
        let c = gen_identity_clouds(&spec(10, 3, 8, 0.2, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_mixture_specs() {
        assert!(gen_identity_clouds(&spec(1, 3, 8, 0.2, 0)).is_err());
        assert!(gen_identity_clouds(&spec(3, 0, 8, 0.2, 0)).is_err());
        assert!(gen_identity_clouds(&spec(3, 2, 8, -0.1, 0)).is_err());
    }

    #[test]
    fn mated_pairs_are_closer_than_non_mated() {
        let set = gen_identity_clouds(&spec(1000, 10, 64, 0.1, 3)).unwrap();
        let ids = set.label_ids().unwrap();
        let (mut mated, mut n_mated, mut non, mut n_non) = (0.0, 0u64, 0.0, 0u64);
        // all mated pairs, and non-mated pairs against every 7th row
        for i in 0..set.len() {
            for j in (i + 1)..set.len() {
                if ids[i] == ids[j] {
                    mated += dot(set.row(i), set.row(j));
                    n_mated += 1;
                } else if j % 7 == 0 {
                    non += dot(set.row(i), set.row(j));
                    n_non += 1;
                }
            }
        }
        assert_eq!(n_mated, 45_000);
        let gap = mated / n_mated as f64 - non / n_non as f64;
        assert!(gap >= 0.2, "gap {gap}");
    }

    #[test]
    fn full_memorization_copies_real_rows() {
        let real = gen_identity_clouds(&spec(20, 2, 6, 0.1, 4)).unwrap();
        let fake = make_fake_set(&real, &PathologySpec::memorizing(1.0, 0.0), 50, 5).unwrap();
        assert!(fake.labels().is_none());
        for row in fake.rows() {
            assert!(real.rows().any(|r| r == row));
        }
    }

    #[test]
    fn single_center_collapse() {
        let real = gen_identity_clouds(&spec(20, 2, 16, 0.1, 4)).unwrap();
        let fake = make_fake_set(&real, &PathologySpec::collapsed(1, 0.01), 100, 6)
            .unwrap()
            .with_distinct_labels();
        let engine = Engine::single_threaded();
        let grid = ThresholdGrid::new(vec![0.99, 1.01]).unwrap();
        let nn = nn_far_curve(
            &engine,
            &ComparisonSpec::within_nonmated(&fake, ScoreScale::default()),
            &grid,
        )
        .unwrap();
        assert_eq!(nn.far()[0], 1.0);
    }

    #[test]
    fn invalid_pathologies() {
        let real = gen_identity_clouds(&spec(4, 2, 6, 0.1, 4)).unwrap();
        assert!(make_fake_set(&real, &PathologySpec::honest(), 0, 1).is_err());
        assert!(make_fake_set(&real, &PathologySpec::memorizing(1.5, 0.0), 5, 1).is_err());
        assert!(make_fake_set(&real, &PathologySpec::collapsed(0, 0.1), 5, 1).is_err());
    }
}
