//! Context-vector activation steering on a self-contained neural network core.
//!
//! The crate builds everything needed to study additive steering of hidden
//! activations at desk scale, without any external model or dataset
//! dependency:
//!
//! * [`tensor`] - a minimal dense kernel (vectors, matrices, activations,
//!   reductions) generic over the scalar type, plus a seeded RNG.
//! * [`nn`] - two hookable architectures: a feed-forward classifier and a
//!   tiny decoder-only transformer, with training loops and checkpointing.
//! * [`engine`] - context-vector extraction, steering indexes, additive
//!   steering, and a persistent context cache.
//! * [`synth`] - deterministic generators for a multi-domain classification
//!   benchmark and a templated sentiment corpus with a lexicon oracle.
//! * [`metrics`] - accuracy reports, max-softmax confidence, sentiment flip
//!   rate, and pairwise BLEU.
//! * [`sweep`] - reproducible batch protocols: the injection-by-removal
//!   grid, per-domain deltas at the grid optimum, and the layer-by-magnitude
//!   generation sweep, with plot-ready table emission.
//!
//! The numeric kernel is generic over [`tensor::Scalar`]; the rest of the
//! crate works on the concrete `f64` aliases below.

pub mod binio;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod sweep;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};

/// Scalar type used by models, datasets, and reports.
pub type Real = f64;

/// Dense vector over [`Real`].
pub type Vector = tensor::DenseVector<Real>;

/// Dense row-major matrix over [`Real`].
pub type Matrix = tensor::DenseMatrix<Real>;
