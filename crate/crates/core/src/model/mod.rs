//! Generator, discriminator and content-loss feature extractor.

pub mod checkpoint;
mod discriminator;
mod features;
mod generator;

pub use checkpoint::{load_checkpoint, save_checkpoint, spec_hash, CheckpointManifest, LoadedCheckpoint};
pub use discriminator::{Discriminator, DiscriminatorSpec};
pub use features::{FeatureExtractor, VggFeatures, VGG19_PREFIX_MODULES};
pub use generator::{Generator, GeneratorSpec, ResidualBlock, UpsampleBlock};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("feature-extractor weights unavailable: {0}")]
    WeightsUnavailable(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
