//! Context-vector steering: extraction, indexes, additive application, and
//! the persistent context cache.

pub mod cache;
pub mod context;
pub mod steering;

pub use cache::ContextCache;
pub use context::{
    extract_mean_context, extract_mean_phrase_context, extract_phrase_context,
    mean_feature_context, ContextVector, Provenance,
};
pub use steering::{
    make_classifier_spec, steer_terms, ResolvedSteering, SteeringIndex, SteeringSpec, SteeringTerm,
};

use crate::error::Result;
use crate::Vector;

/// Resolves a spec's labels against the cache at the spec's layer.
pub fn resolve(spec: &SteeringSpec, cache: &ContextCache) -> Result<ResolvedSteering> {
    let mut terms = Vec::with_capacity(spec.terms.len());
    for term in &spec.terms {
        let ctx = cache.get(spec.layer, &term.label)?;
        terms.push((term.strength, ctx.vector.clone()));
    }
    Ok(ResolvedSteering {
        layer: spec.layer,
        terms,
    })
}

/// Steers one activation: `h + sum_j alpha_j * (c_j - h)` with contexts
/// looked up in the cache. Pure vector arithmetic; no forward passes.
pub fn apply_steering(h: &Vector, spec: &SteeringSpec, cache: &ContextCache) -> Result<Vector> {
    resolve(spec, cache)?.apply(h)
}
