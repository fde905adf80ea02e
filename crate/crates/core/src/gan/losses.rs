//! Wasserstein, paired (SD) and triplet critic/generator losses, and their
//! exact gradients.
//!
//! All losses are minimized as written: the critic pushes real-pair scores
//! down and synthetic / imposter scores up, the generator pushes synthetic
//! scores down. With `m_r`, `m_f`, `m_i` the batch means of the critic over
//! real pairs, synthetic pairs and imposter pairs:
//!
//! ```text
//! plain / paired:  L_D = m_r - m_f                                 L_G = m_f
//! triplet:         L_D = m_r - (m_f + m_i) / 2 + lambda (m_f - m_i)^2   L_G = m_f
//! ```

use ndarray::{concatenate, s, Array2, Axis};

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};

use super::mlp::{Grads, Mlp};
use super::model::SdGanModel;

/// Image pairs laid out as `[first | second]` rows for the critic.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub data: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Mated,
    NonMated,
}

impl PairBatch {
    /// Gather `(a, b)` row pairs of a labeled set, checking that each pair
    /// is mated or non-mated as requested.
    pub fn from_pairs(
        set: &EmbeddingSet,
        pairs: &[(usize, usize)],
        kind: PairKind,
    ) -> Result<Self> {
        let ids = set
            .label_ids()
            .ok_or_else(|| Error::LabelsRequired("pair batches need labeled data".into()))?;
        let dim = set.dim();
        let mut data = Array2::zeros((pairs.len(), 2 * dim));
        for (r, &(a, b)) in pairs.iter().enumerate() {
            let same = ids[a] == ids[b];
            match kind {
                PairKind::Mated if !same => {
                    return Err(Error::Invalid(format!(
                        "pair ({a}, {b}) is not mated: labels differ"
                    )))
                }
                PairKind::NonMated if same => {
                    return Err(Error::Invalid(format!(
                        "pair ({a}, {b}) shares a label but should be non-mated"
                    )))
                }
                _ => {}
            }
            let mut row = data.row_mut(r);
            row.slice_mut(s![..dim])
                .iter_mut()
                .zip(set.row(a))
                .for_each(|(d, v)| *d = *v);
            row.slice_mut(s![dim..])
                .iter_mut()
                .zip(set.row(b))
                .for_each(|(d, v)| *d = *v);
        }
        Ok(PairBatch { data })
    }

    /// Swap the two halves of every pair.
    pub fn swapped(&self) -> Self {
        let half = self.data.ncols() / 2;
        let data = concatenate![
            Axis(1),
            self.data.slice(s![.., half..]),
            self.data.slice(s![.., ..half])
        ];
        PairBatch { data }
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }
}

/// Batch means of the critic on each kind of input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticMeans {
    pub real: f64,
    pub fake: f64,
    pub imposter: Option<f64>,
}

impl CriticMeans {
    /// Critic loss from the three means.
    pub fn critic_loss(&self, lambda: f64) -> f64 {
        match self.imposter {
            None => self.real - self.fake,
            Some(imp) => self.real - 0.5 * (self.fake + imp) + lambda * (self.fake - imp).powi(2),
        }
    }
}

fn mean_output(critic: &Mlp, x: &Array2<f64>) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::Invalid("empty batch".into()));
    }
    let m = critic.predict(x).mean().expect("non-empty");
    if !m.is_finite() {
        return Err(Error::NonFinite("critic output".into()));
    }
    Ok(m)
}

fn check_width(net: &Mlp, x: &Array2<f64>, what: &str) -> Result<()> {
    if net.input_width() != x.ncols() {
        return Err(Error::Invalid(format!(
            "{what}: network expects {} columns, got {}",
            net.input_width(),
            x.ncols()
        )));
    }
    Ok(())
}

/// `[G(z1) | G(z2)]` rows.
pub fn fake_pairs(generator: &Mlp, z1: &Array2<f64>, z2: &Array2<f64>) -> Result<Array2<f64>> {
    check_width(generator, z1, "latent")?;
    check_width(generator, z2, "latent")?;
    if z1.nrows() != z2.nrows() {
        return Err(Error::Invalid("latent batches differ in size".into()));
    }
    let a = generator.predict(z1);
    let b = generator.predict(z2);
    Ok(concatenate![Axis(1), a, b])
}

/// Plain Wasserstein losses with a single-sample critic.
pub fn wgan_losses(
    critic: &Mlp,
    generator: &Mlp,
    x: &Array2<f64>,
    z: &Array2<f64>,
) -> Result<(f64, f64)> {
    check_width(critic, x, "real batch")?;
    check_width(generator, z, "latent")?;
    let fake = generator.predict(z);
    let means = CriticMeans {
        real: mean_output(critic, x)?,
        fake: mean_output(critic, &fake)?,
        imposter: None,
    };
    Ok((means.critic_loss(0.0), means.fake))
}

/// Paired-critic losses on a mated real batch and latent pairs.
pub fn sdgan_losses(
    model: &SdGanModel,
    x: &PairBatch,
    z1: &Array2<f64>,
    z2: &Array2<f64>,
) -> Result<(f64, f64)> {
    let means = critic_means(model, x, None, z1, z2)?;
    Ok((means.critic_loss(0.0), means.fake))
}

/// Triplet losses: the imposter batch joins the synthetic batch as "fake",
/// with a quadratic penalty keeping their critic means together.
pub fn triplet_losses(
    model: &SdGanModel,
    x: &PairBatch,
    x_bar: &PairBatch,
    z1: &Array2<f64>,
    z2: &Array2<f64>,
    lambda: f64,
) -> Result<(f64, f64)> {
    if !(lambda >= 0.0) {
        return Err(Error::Invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let means = critic_means(model, x, Some(x_bar), z1, z2)?;
    Ok((means.critic_loss(lambda), means.fake))
}

pub fn critic_means(
    model: &SdGanModel,
    x: &PairBatch,
    x_bar: Option<&PairBatch>,
    z1: &Array2<f64>,
    z2: &Array2<f64>,
) -> Result<CriticMeans> {
    check_width(&model.critic, &x.data, "real pairs")?;
    let fake = fake_pairs(&model.generator, z1, z2)?;
    let imposter = match x_bar {
        Some(b) => {
            if b.is_empty() {
                return Err(Error::Invalid("empty imposter batch".into()));
            }
            check_width(&model.critic, &b.data, "imposter pairs")?;
            Some(mean_output(&model.critic, &b.data)?)
        }
        None => None,
    };
    Ok(CriticMeans {
        real: mean_output(&model.critic, &x.data)?,
        fake: mean_output(&model.critic, &fake)?,
        imposter,
    })
}

fn uniform_grad(rows: usize, coeff: f64) -> Array2<f64> {
    Array2::from_elem((rows, 1), coeff / rows as f64)
}

/// Critic loss and its gradient with respect to the critic parameters,
/// given already-formed critic inputs (generator frozen).
pub fn critic_gradients(
    critic: &Mlp,
    real: &Array2<f64>,
    fake: &Array2<f64>,
    imposter: Option<&Array2<f64>>,
    lambda: f64,
) -> Result<(f64, Grads, CriticMeans)> {
    for (x, what) in [(real, "real"), (fake, "fake")]
        .into_iter()
        .chain(imposter.map(|i| (i, "imposter")))
    {
        check_width(critic, x, what)?;
        if x.nrows() == 0 {
            return Err(Error::Invalid(format!("empty {what} batch")));
        }
    }
    let real_t = critic.forward(real);
    let fake_t = critic.forward(fake);
    let imp_t = imposter.map(|x| critic.forward(x));
    let mean = |t: &super::mlp::Trace| t.output.mean().expect("non-empty");
    let means = CriticMeans {
        real: mean(&real_t),
        fake: mean(&fake_t),
        imposter: imp_t.as_ref().map(mean),
    };
    let loss = means.critic_loss(lambda);
    if !loss.is_finite() {
        return Err(Error::NonFinite("critic loss".into()));
    }
    // dL/d(mean) for each input kind
    let (c_real, c_fake, c_imp) = match means.imposter {
        None => (1.0, -1.0, 0.0),
        Some(imp) => {
            let gap = 2.0 * lambda * (means.fake - imp);
            (1.0, -0.5 + gap, -0.5 - gap)
        }
    };
    let mut grads = critic
        .backward(&real_t, &uniform_grad(real.nrows(), c_real))
        .0;
    grads.add_assign(
        &critic
            .backward(&fake_t, &uniform_grad(fake.nrows(), c_fake))
            .0,
    );
    if let (Some(t), Some(x)) = (&imp_t, imposter) {
        grads.add_assign(&critic.backward(t, &uniform_grad(x.nrows(), c_imp)).0);
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite("critic gradient".into()));
    }
    Ok((loss, grads, means))
}

/// Plain generator loss `mean D(G(z))` and its generator gradient.
pub fn generator_gradients_single(
    critic: &Mlp,
    generator: &Mlp,
    z: &Array2<f64>,
) -> Result<(f64, Grads)> {
    check_width(generator, z, "latent")?;
    let g_t = generator.forward(z);
    check_width(critic, &g_t.output, "generated batch")?;
    let c_t = critic.forward(&g_t.output);
    let loss = c_t.output.mean().expect("non-empty");
    let (_, d_fake) = critic.backward(&c_t, &uniform_grad(z.nrows(), 1.0));
    let (grads, _) = generator.backward(&g_t, &d_fake);
    finish_generator(loss, grads)
}

/// Paired generator loss `mean D(G(z1), G(z2))` and its generator gradient.
pub fn generator_gradients_paired(
    critic: &Mlp,
    generator: &Mlp,
    z1: &Array2<f64>,
    z2: &Array2<f64>,
) -> Result<(f64, Grads)> {
    if z1.nrows() != z2.nrows() || z1.nrows() == 0 {
        return Err(Error::Invalid(
            "latent batches must be equal and non-empty".into(),
        ));
    }
    check_width(generator, z1, "latent")?;
    check_width(generator, z2, "latent")?;
    let rows = z1.nrows();
    // one generator pass over both halves
    let stacked = concatenate![Axis(0), z1.view(), z2.view()];
    let g_t = generator.forward(&stacked);
    let dim = generator.output_width();
    let pairs = concatenate![
        Axis(1),
        g_t.output.slice(s![..rows, ..]),
        g_t.output.slice(s![rows.., ..])
    ];
    check_width(critic, &pairs, "generated pairs")?;
    let c_t = critic.forward(&pairs);
    let loss = c_t.output.mean().expect("non-empty");
    let (_, d_pairs) = critic.backward(&c_t, &uniform_grad(rows, 1.0));
    let d_stacked = concatenate![
        Axis(0),
        d_pairs.slice(s![.., ..dim]),
        d_pairs.slice(s![.., dim..])
    ];
    let (grads, _) = generator.backward(&g_t, &d_stacked);
    finish_generator(loss, grads)
}

fn finish_generator(loss: f64, grads: Grads) -> Result<(f64, Grads)> {
    if !loss.is_finite() {
        return Err(Error::NonFinite("generator loss".into()));
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite("generator gradient".into()));
    }
    Ok((loss, grads))
}

/// Which network's loss to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTarget {
    Critic,
    Generator,
}

/// Inputs to one paired loss evaluation. `x_bar = None` selects the plain
/// paired losses; `Some` selects the triplet losses.
#[derive(Debug, Clone, Copy)]
pub struct LossBatch<'a> {
    pub x: &'a PairBatch,
    pub x_bar: Option<&'a PairBatch>,
    pub z1: &'a Array2<f64>,
    pub z2: &'a Array2<f64>,
    pub lambda: f64,
}

/// Loss value and gradient for the selected network of a paired model.
pub fn backward(
    model: &SdGanModel,
    target: LossTarget,
    batch: &LossBatch<'_>,
) -> Result<(f64, Grads)> {
    match target {
        LossTarget::Critic => {
            let fake = fake_pairs(&model.generator, batch.z1, batch.z2)?;
            let (loss, grads, _) = critic_gradients(
                &model.critic,
                &batch.x.data,
                &fake,
                batch.x_bar.map(|b| &b.data),
                batch.lambda,
            )?;
            Ok((loss, grads))
        }
        LossTarget::Generator => {
            generator_gradients_paired(&model.critic, &model.generator, batch.z1, batch.z2)
        }
    }
}

/// Loss value only, matching `backward`.
pub fn loss_value(model: &SdGanModel, target: LossTarget, batch: &LossBatch<'_>) -> Result<f64> {
    let (l_d, l_g) = match batch.x_bar {
        Some(x_bar) => triplet_losses(model, batch.x, x_bar, batch.z1, batch.z2, batch.lambda)?,
        None => sdgan_losses(model, batch.x, batch.z1, batch.z2)?,
    };
    Ok(match target {
        LossTarget::Critic => l_d,
        LossTarget::Generator => l_g,
    })
}
