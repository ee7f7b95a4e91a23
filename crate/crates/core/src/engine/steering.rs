//! Additive steering of activations.
//!
//! An index is the difference `d = c - h` between a context vector and the
//! current activation. Steering applies `h + sum_j alpha_j * (c_j - h)` with
//! no normalization or clipping; the scalar strengths are the only knobs.
//!
//! Two cases are exact by construction rather than up to rounding:
//! zero-strength terms contribute nothing, so an all-zero spec returns the
//! input bitwise, and a single term with strength 1 replaces the activation
//! with the context vector.

use serde::{Deserialize, Serialize};

use crate::engine::context::ContextVector;
use crate::error::{Error, Result};
use crate::tensor::{DenseVector, Scalar};
use crate::{Matrix, Vector};

/// One steering term: a context label and its strength. Positive strength
/// injects the context, negative strength removes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringTerm {
    pub label: String,
    pub strength: f64,
}

/// A steering intervention: the tap layer plus the terms applied jointly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringSpec {
    pub layer: usize,
    pub terms: Vec<SteeringTerm>,
}

impl SteeringSpec {
    pub fn new(layer: usize, terms: Vec<(impl Into<String>, f64)>) -> Result<Self> {
        let terms: Vec<SteeringTerm> = terms
            .into_iter()
            .map(|(label, strength)| SteeringTerm {
                label: label.into(),
                strength,
            })
            .collect();
        if terms.iter().any(|t| !t.strength.is_finite()) {
            return Err(Error::Config("steering strengths must be finite".into()));
        }
        Ok(Self { layer, terms })
    }

    /// True when every term has zero strength (application is the identity).
    pub fn is_identity(&self) -> bool {
        self.terms.iter().all(|t| t.strength == 0.0)
    }
}

/// Spec for the classifier protocol: inject the source-domain context and
/// remove the target-domain context. Strengths are nonnegative magnitudes;
/// the removal sign is applied here.
pub fn make_classifier_spec(
    inject: impl Into<String>,
    remove: impl Into<String>,
    alpha_in: f64,
    alpha_out: f64,
    layer: usize,
) -> Result<SteeringSpec> {
    if !(alpha_in >= 0.0 && alpha_out >= 0.0) {
        return Err(Error::Config(
            "injection and removal strengths are nonnegative magnitudes".into(),
        ));
    }
    SteeringSpec::new(layer, vec![(inject.into(), alpha_in), (remove.into(), -alpha_out)])
}

/// An index `d = c - h`, recomputed per input or token.
#[derive(Debug, Clone)]
pub struct SteeringIndex {
    pub label: String,
    pub layer: usize,
    pub index: Vector,
}

impl SteeringIndex {
    pub fn new(context: &ContextVector, h: &Vector) -> Result<Self> {
        if context.vector.len() != h.len() {
            return Err(Error::Dimension {
                context: "steering index",
                expected: context.vector.len(),
                got: h.len(),
            });
        }
        Ok(Self {
            label: context.label.clone(),
            layer: context.layer,
            index: context.vector.sub(h)?,
        })
    }
}

/// Core algebra: `h + sum_j alpha_j * (c_j - h)` over (strength, context)
/// pairs, generic over the scalar.
pub fn steer_terms<S: Scalar>(
    h: &DenseVector<S>,
    terms: &[(S, &DenseVector<S>)],
) -> Result<DenseVector<S>> {
    for (_, c) in terms {
        if c.len() != h.len() {
            return Err(Error::Dimension {
                context: "steer_terms",
                expected: h.len(),
                got: c.len(),
            });
        }
    }
    let active: Vec<&(S, &DenseVector<S>)> =
        terms.iter().filter(|(a, _)| *a != S::zero()).collect();
    if active.is_empty() {
        return Ok(h.clone());
    }
    if active.len() == 1 && active[0].0 == S::one() {
        // Strength 1 with a single context is full replacement.
        return Ok(active[0].1.clone());
    }
    let mut out = h.clone();
    for (alpha, c) in active {
        for (o, (&cv, &hv)) in out
            .values_mut()
            .iter_mut()
            .zip(c.values().iter().zip(h.values()))
        {
            *o = *o + *alpha * (cv - hv);
        }
    }
    Ok(out)
}

/// A spec with its context labels resolved to concrete vectors, ready to
/// apply without cache lookups.
#[derive(Debug, Clone)]
pub struct ResolvedSteering {
    pub layer: usize,
    pub terms: Vec<(f64, Vector)>,
}

impl ResolvedSteering {
    /// Steers a single activation vector.
    pub fn apply(&self, h: &Vector) -> Result<Vector> {
        let refs: Vec<(f64, &Vector)> = self.terms.iter().map(|(a, c)| (*a, c)).collect();
        steer_terms(h, &refs)
    }

    /// Steers every row of a (positions x width) activation matrix with the
    /// same terms.
    pub fn apply_rows(&self, m: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for t in 0..m.rows() {
            let steered = self.apply(&m.row_vector(t))?;
            out.row_mut(t).copy_from_slice(steered.values());
        }
        Ok(out)
    }
}
