use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};

use super::model::SdGanModel;

/// `k` identities of `m` rows each: one shared identity latent per identity,
/// a fresh variation latent per row. Rows are labeled `id{i}` and
/// unit-normalized.
pub fn generate_identity_sets(
    model: &SdGanModel,
    k: usize,
    m: usize,
    seed: u64,
) -> Result<EmbeddingSet> {
    if k == 0 || m == 0 {
        return Err(Error::Invalid(format!(
            "need k >= 1 and m >= 1, got k={k} m={m}"
        )));
    }
    let spec = model.latent;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = Array2::zeros((k * m, spec.total()));
    let mut labels = Vec::with_capacity(k * m);
    for id in 0..k {
        let z_id: Vec<f64> = (0..spec.d_id).map(|_| rng.sample(StandardNormal)).collect();
        for r in 0..m {
            let mut row = z.row_mut(id * m + r);
            for (c, v) in z_id.iter().enumerate() {
                row[c] = *v;
            }
            for c in spec.d_id..spec.total() {
                row[c] = rng.sample(StandardNormal);
            }
            labels.push(format!("id{id}"));
        }
    }
    let out = model.generator.predict(&z);
    let values: Vec<f64> = out.iter().copied().collect();
    EmbeddingSet::new(
        format!("generated-k{k}-m{m}-s{seed}"),
        model.data_dim(),
        values,
        Some(labels),
    )?
    .normalize()
}
