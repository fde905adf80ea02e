#![allow(dead_code)]

use idgap::gan::{
    critic_gradients, generator_gradients_paired, generator_gradients_single, sample_latent_batch,
    sdgan_losses, triplet_losses, wgan_losses, Grads, LatentSpec, Mlp, PairBatch, SdGanModel,
};
use idgap::EmbeddingSet;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Denominator floor for relative error. Central differences carry about
/// 1e-10 of roundoff at this step, so parameters whose true gradient is zero
/// (the critic output bias under the critic loss) compare on an absolute
/// scale instead.
pub const FD_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Central differences of `loss` over every parameter of `net`.
pub fn numeric_gradient(net: &Mlp, loss: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let base = net.params();
    let mut probe = net.clone();
    (0..base.len())
        .map(|k| {
            let mut p = base.clone();
            p[k] = base[k] + FD_STEP;
            probe.set_params(&p);
            let up = loss(&probe);
            p[k] = base[k] - FD_STEP;
            probe.set_params(&p);
            let down = loss(&probe);
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn max_relative_error(analytic: &Grads, numeric: &[f64]) -> f64 {
    let a = analytic.flatten();
    assert_eq!(a.len(), numeric.len());
    a.iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Tiny paired model: generator 2-4-2, critic 4-8-1, unclipped in practice.
pub fn tiny_model(seed: u64) -> SdGanModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SdGanModel::new(LatentSpec::new(1, 1).unwrap(), 2, &[4], 10.0, &mut rng).unwrap()
}

/// Worst relative error for each of the six losses on one random model.
pub struct GradientReport {
    pub eq: [f64; 6],
}

pub fn check_all_losses(seed: u64, lambda: f64) -> GradientReport {
    let model = tiny_model(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let batch = 5;
    let x = PairBatch {
        data: gaussian_matrix(batch, 4, &mut rng),
    };
    let x_bar = PairBatch {
        data: gaussian_matrix(batch + 2, 4, &mut rng),
    };
    let (z1, z2) = sample_latent_batch(model.latent, batch, &mut rng);

    // plain WGAN: a single-sample critic on the generator's output
    let single = Mlp::new(&[2, 8, 1], &mut rng);
    let x_single = gaussian_matrix(batch, 2, &mut rng);
    let z = gaussian_matrix(batch, 2, &mut rng);
    let fake_single = model.generator.predict(&z);

    let (_, g1, _) = critic_gradients(&single, &x_single, &fake_single, None, 0.0).unwrap();
    let n1 = numeric_gradient(&single, |c| {
        wgan_losses(c, &model.generator, &x_single, &z).unwrap().0
    });
    let (_, g2) = generator_gradients_single(&single, &model.generator, &z).unwrap();
    let n2 = numeric_gradient(&model.generator, |g| {
        wgan_losses(&single, g, &x_single, &z).unwrap().1
    });

    let fake = idgap::gan::fake_pairs(&model.generator, &z1, &z2).unwrap();
    let with_critic = |c: &Mlp| SdGanModel {
        critic: c.clone(),
        ..model.clone()
    };
    let with_generator = |g: &Mlp| SdGanModel {
        generator: g.clone(),
        ..model.clone()
    };

    let (_, g3, _) = critic_gradients(&model.critic, &x.data, &fake, None, 0.0).unwrap();
    let n3 = numeric_gradient(&model.critic, |c| {
        sdgan_losses(&with_critic(c), &x, &z1, &z2).unwrap().0
    });
    let (_, g4) = generator_gradients_paired(&model.critic, &model.generator, &z1, &z2).unwrap();
    let n4 = numeric_gradient(&model.generator, |g| {
        sdgan_losses(&with_generator(g), &x, &z1, &z2).unwrap().1
    });

    let (_, g5, _) =
        critic_gradients(&model.critic, &x.data, &fake, Some(&x_bar.data), lambda).unwrap();
    let n5 = numeric_gradient(&model.critic, |c| {
        triplet_losses(&with_critic(c), &x, &x_bar, &z1, &z2, lambda)
            .unwrap()
            .0
    });
    let n6 = numeric_gradient(&model.generator, |g| {
        triplet_losses(&with_generator(g), &x, &x_bar, &z1, &z2, lambda)
            .unwrap()
            .1
    });

    GradientReport {
        eq: [
            max_relative_error(&g1, &n1),
            max_relative_error(&g2, &n2),
            max_relative_error(&g3, &n3),
            max_relative_error(&g4, &n4),
            max_relative_error(&g5, &n5),
            max_relative_error(&g4, &n6),
        ],
    }
}

/// Random unit rows with `ids` distinct labels assigned round-robin.
pub fn random_labeled_set(n: usize, dim: usize, ids: usize, seed: u64) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..n * dim).map(|_| rng.sample(StandardNormal)).collect();
    let labels = (0..n).map(|i| format!("p{}", i % ids)).collect();
    EmbeddingSet::new(format!("rand-{seed}"), dim, values, Some(labels))
        .unwrap()
        .normalize()
        .unwrap()
}
