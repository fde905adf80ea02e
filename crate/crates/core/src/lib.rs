//! Measure whether a generative model reproduces training identities or
//! collapses onto few of them, from embedding datasets alone; plus a small
//! paired-critic GAN with an imposter-pair triplet loss whose samples feed
//! the same measurements.

pub mod embeddings;
pub mod error;
pub mod gan;
pub mod metrics;
pub mod synthgen;

pub use embeddings::{load_embeddings, EmbeddingSet, FileFormat, ScoreScale};
pub use error::{Error, Result};
