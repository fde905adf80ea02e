use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingSet, ScoreScale};
use crate::error::{Error, Result};
use crate::metrics::Engine;

use super::losses::{
    critic_gradients, fake_pairs, generator_gradients_paired, CriticMeans, PairBatch, PairKind,
};
use super::mlp::{Grads, Mlp};
use super::model::{sample_latent_batch, SdGanModel};
use super::pool::{build_negative_pool, HardNegativePool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Paired critic only.
    SdGan,
    /// Paired critic plus pool-sampled imposter pairs.
    Triplet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    Sgd {
        lr: f64,
    },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            lr: 1e-3,
            beta1: 0.0,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

/// Training hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripletConfig {
    pub variant: Variant,
    pub lambda: f64,
    pub negative_pool_quantile: f64,
    pub n_critic: usize,
    pub batch: usize,
    pub optimizer: Optimizer,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig {
            variant: Variant::Triplet,
            lambda: 0.001,
            negative_pool_quantile: 0.05,
            n_critic: 5,
            batch: 64,
            optimizer: Optimizer::default(),
        }
    }
}

impl TripletConfig {
    pub fn sd_gan() -> Self {
        TripletConfig {
            variant: Variant::SdGan,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.negative_pool_quantile > 0.0 && self.negative_pool_quantile < 1.0) {
            return Err(Error::Invalid(format!(
                "negative_pool_quantile must lie in (0, 1), got {}",
                self.negative_pool_quantile
            )));
        }
        if self.n_critic == 0 || self.batch == 0 {
            return Err(Error::Invalid("n_critic and batch must be positive".into()));
        }
        let ok = match self.optimizer {
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
            Optimizer::Sgd { lr } => lr > 0.0,
        };
        if !ok {
            return Err(Error::Invalid(format!(
                "bad optimizer settings {:?}",
                self.optimizer
            )));
        }
        Ok(())
    }
}

/// Labeled real data prepared for pair sampling.
#[derive(Debug, Clone)]
pub struct TrainingData<'a> {
    pub set: &'a EmbeddingSet,
    /// Row lists of identities with at least two rows.
    groups: Vec<Vec<usize>>,
    pub pool: Option<HardNegativePool>,
}

impl<'a> TrainingData<'a> {
    /// Index the identities of `set`; the triplet variant also builds the
    /// hard negative pool.
    pub fn new(set: &'a EmbeddingSet, config: &TripletConfig) -> Result<Self> {
        config.validate()?;
        let ids = set
            .label_ids()
            .ok_or_else(|| Error::LabelsRequired("training data must be labeled".into()))?;
        if !set.is_normalized() {
            return Err(Error::Invalid("training data must be normalized".into()));
        }
        let mut groups = vec![Vec::new(); set.identity_count().unwrap_or(0)];
        for (row, &id) in ids.iter().enumerate() {
            groups[id as usize].push(row);
        }
        groups.retain(|g| g.len() > 1);
        if groups.is_empty() {
            return Err(Error::EmptyComparison(
                "training data has no identity with two or more rows".into(),
            ));
        }
        let pool = match config.variant {
            Variant::SdGan => None,
            Variant::Triplet => Some(build_negative_pool(
                &Engine::single_threaded(),
                set,
                config.negative_pool_quantile,
                ScoreScale::default(),
            )?),
        };
        Ok(TrainingData { set, groups, pool })
    }

    fn mated_batch(&self, batch: usize, rng: &mut ChaCha8Rng) -> Result<PairBatch> {
        let pairs: Vec<(usize, usize)> = (0..batch)
            .map(|_| {
                let g = &self.groups[rng.random_range(0..self.groups.len())];
                let a = rng.random_range(0..g.len());
                let mut b = rng.random_range(0..g.len() - 1);
                if b >= a {
                    b += 1;
                }
                (g[a], g[b])
            })
            .collect();
        PairBatch::from_pairs(self.set, &pairs, PairKind::Mated)
    }

    fn imposter_batch(&self, batch: usize, rng: &mut ChaCha8Rng) -> Result<Option<PairBatch>> {
        let Some(pool) = &self.pool else {
            return Ok(None);
        };
        if pool.is_empty() {
            return Err(Error::EmptyComparison("negative pool is empty".into()));
        }
        let pairs: Vec<(usize, usize)> = (0..batch)
            .map(|_| pool.pairs[rng.random_range(0..pool.len())])
            .collect();
        PairBatch::from_pairs(self.set, &pairs, PairKind::NonMated).map(Some)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state for both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: Optimizer,
    critic: Moments,
    generator: Moments,
    critic_t: i32,
    generator_t: i32,
}

impl OptimizerState {
    pub fn new(config: Optimizer, model: &SdGanModel) -> Self {
        let zeros = |net: &Mlp| Moments {
            m: vec![0.0; net.param_count()],
            v: vec![0.0; net.param_count()],
        };
        OptimizerState {
            config,
            critic: zeros(&model.critic),
            generator: zeros(&model.generator),
            critic_t: 0,
            generator_t: 0,
        }
    }
}

fn apply_update(
    net: &mut Mlp,
    grads: &Grads,
    config: Optimizer,
    moments: &mut Moments,
    t: &mut i32,
) {
    let g = grads.flatten();
    let mut p = net.params();
    match config {
        Optimizer::Sgd { lr } => p.iter_mut().zip(&g).for_each(|(p, g)| *p -= lr * g),
        Optimizer::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            *t += 1;
            let c1 = 1.0 - beta1.powi(*t);
            let c2 = 1.0 - beta2.powi(*t);
            for k in 0..p.len() {
                moments.m[k] = beta1 * moments.m[k] + (1.0 - beta1) * g[k];
                moments.v[k] = beta2 * moments.v[k] + (1.0 - beta2) * g[k] * g[k];
                p[k] -= lr * (moments.m[k] / c1) / ((moments.v[k] / c2).sqrt() + eps);
            }
        }
    }
    net.set_params(&p);
}

/// Scalars recorded for one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    /// Critic loss of the last critic update, before that update.
    pub loss_d: f64,
    /// Generator loss before the generator update.
    pub loss_g: f64,
    pub d_real: f64,
    pub d_fake: f64,
    pub d_imposter: Option<f64>,
}

impl StepLog {
    pub fn means(&self) -> CriticMeans {
        CriticMeans {
            real: self.d_real,
            fake: self.d_fake,
            imposter: self.d_imposter,
        }
    }
}

fn diverged(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(message) => Error::Divergence { step, message },
        other => other,
    }
}

/// `n_critic` critic updates, each followed by clipping, then one generator
/// update.
pub fn train_step(
    model: &mut SdGanModel,
    data: &TrainingData<'_>,
    config: &TripletConfig,
    state: &mut OptimizerState,
    rng: &mut ChaCha8Rng,
    step: usize,
) -> Result<StepLog> {
    let lambda = match config.variant {
        Variant::SdGan => 0.0,
        Variant::Triplet => config.lambda,
    };
    let mut last: Option<(f64, CriticMeans)> = None;
    for _ in 0..config.n_critic {
        let real = data.mated_batch(config.batch, rng)?;
        let imposter = data.imposter_batch(config.batch, rng)?;
        let (z1, z2) = sample_latent_batch(model.latent, config.batch, rng);
        let fake = fake_pairs(&model.generator, &z1, &z2).map_err(diverged(step))?;
        let (loss, grads, means) = critic_gradients(
            &model.critic,
            &real.data,
            &fake,
            imposter.as_ref().map(|b| &b.data),
            lambda,
        )
        .map_err(diverged(step))?;
        apply_update(
            &mut model.critic,
            &grads,
            state.config,
            &mut state.critic,
            &mut state.critic_t,
        );
        model.critic.clip(model.clip);
        if !model.critic.all_finite() {
            return Err(Error::Divergence {
                step,
                message: "critic parameters became non-finite".into(),
            });
        }
        last = Some((loss, means));
    }
    let (z1, z2) = sample_latent_batch(model.latent, config.batch, rng);
    let (loss_g, grads) = generator_gradients_paired(&model.critic, &model.generator, &z1, &z2)
        .map_err(diverged(step))?;
    apply_update(
        &mut model.generator,
        &grads,
        state.config,
        &mut state.generator,
        &mut state.generator_t,
    );
    if !model.generator.all_finite() {
        return Err(Error::Divergence {
            step,
            message: "generator parameters became non-finite".into(),
        });
    }
    let (loss_d, means) = last.expect("n_critic >= 1");
    Ok(StepLog {
        step,
        loss_d,
        loss_g,
        d_real: means.real,
        d_fake: means.fake,
        d_imposter: means.imposter,
    })
}

/// Per-step scalars of a training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub steps: Vec<StepLog>,
}

impl TrainingTrace {
    pub const CSV_HEADER: &'static str = "step,loss_d,loss_g,d_real,d_fake,d_imposter";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for s in &self.steps {
            let imp = s.d_imposter.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.step, s.loss_d, s.loss_g, s.d_real, s.d_fake, imp
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out)
            .expect("writing to memory cannot fail");
        String::from_utf8(out).expect("ascii")
    }
}

/// Run `steps` training steps from `model`, seeded by `seed`.
pub fn train(
    model: &SdGanModel,
    data: &EmbeddingSet,
    config: &TripletConfig,
    steps: usize,
    seed: u64,
) -> Result<(SdGanModel, TrainingTrace)> {
    let prepared = TrainingData::new(data, config)?;
    if prepared.set.dim() != model.data_dim() {
        return Err(Error::DimMismatch {
            left: model.data_dim(),
            right: data.dim(),
        });
    }
    let mut model = model.clone();
    let mut state = OptimizerState::new(config.optimizer, &model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = TrainingTrace::default();
    for step in 0..steps {
        trace.steps.push(train_step(
            &mut model, &prepared, config, &mut state, &mut rng, step,
        )?);
    }
    Ok((model, trace))
}

/// Sampled mean of the critic over latent pairs, for diagnostics.
pub fn mean_fake_score(model: &SdGanModel, batch: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (z1, z2) = sample_latent_batch(model.latent, batch, &mut rng);
    let fake: Array2<f64> = fake_pairs(&model.generator, &z1, &z2)?;
    Ok(model.critic.predict(&fake).mean().unwrap_or(0.0))
}
