//! Paired-critic Wasserstein GAN with shared identity latents and the
//! imposter-pair triplet loss, on small fully connected networks.

mod generate;
pub mod losses;
pub mod mlp;
mod model;
mod pool;
mod train;

pub use generate::generate_identity_sets;
pub use losses::{
    backward, critic_gradients, fake_pairs, generator_gradients_paired, generator_gradients_single,
    loss_value, sdgan_losses, triplet_losses, wgan_losses, CriticMeans, LossBatch, LossTarget,
    PairBatch, PairKind,
};
pub use mlp::{Grads, Layer, Mlp, Trace, LEAKY_SLOPE};
pub use model::{
    sample_latent_batch, sample_latent_pair, LatentSpec, SdGanModel, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use pool::{build_negative_pool, HardNegativePool};
pub use train::{
    mean_fake_score, train, train_step, Optimizer, OptimizerState, StepLog, TrainingData,
    TrainingTrace, TripletConfig, Variant,
};
