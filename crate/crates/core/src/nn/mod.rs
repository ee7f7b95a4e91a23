//! Hookable model architectures with training loops and checkpointing.
//!
//! Both architectures expose tap points where an intermediate activation can
//! be captured and replaced, and both expose flat parameter views so the
//! optimizers and the finite-difference gradient checks share one code path.

pub mod checkpoint;
pub mod mlp;
pub mod params;
pub mod transformer;

pub use checkpoint::{mlp_digest, transformer_digest, Arch, Checkpoint, Provenance};
pub use mlp::{train_mlp, Example, MlpClassifier, MlpTrainConfig};
pub use transformer::{
    train_tiny_transformer, TinyTransformer, TransformerConfig, TransformerTrainConfig,
};
