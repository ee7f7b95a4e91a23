//! Context vectors: cached reference activations at a tap point.
//!
//! A classifier context is the mean of tapped activations over a sample set
//! that shares some non-label attribute; only the samples' features enter
//! the computation, never their labels. A transformer context is the hidden
//! state of the last token of a short phrase at the tapped layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{MlpClassifier, TinyTransformer};
use crate::tensor::mean_of;
use crate::Vector;

/// How a context vector was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    /// Mean of tapped activations over a sample set of this size.
    MeanOfSet { sample_count: usize },
    /// Last-token hidden state of this phrase (token ids).
    LastToken { phrase: Vec<u32> },
}

/// A cached contextual reference at one tap point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    pub label: String,
    pub layer: usize,
    pub vector: Vector,
    pub provenance: Provenance,
}

/// Mean tapped activation of a classifier over a feature-sample set.
///
/// One tapped forward pass per sample; tap 0 averages the raw input features
/// themselves.
pub fn extract_mean_context(
    model: &MlpClassifier,
    samples: &[Vector],
    layer: usize,
    label: impl Into<String>,
) -> Result<ContextVector> {
    if samples.is_empty() {
        return Err(Error::EmptyContextSet);
    }
    model.tap_width(layer)?;
    let identity = |h: &Vector| h.clone();
    let mut taps = Vec::with_capacity(samples.len());
    for x in samples {
        let (_, h) = model.forward_with_tap(x, layer, &identity)?;
        taps.push(h);
    }
    Ok(ContextVector {
        label: label.into(),
        layer,
        vector: mean_of(&taps)?,
        provenance: Provenance::MeanOfSet {
            sample_count: samples.len(),
        },
    })
}

/// Residual activation of a phrase's final token at one transformer tap.
pub fn extract_phrase_context(
    model: &TinyTransformer,
    phrase: &[u32],
    layer: usize,
    label: impl Into<String>,
) -> Result<ContextVector> {
    if phrase.is_empty() {
        return Err(Error::EmptyContextSet);
    }
    let identity = |m: &crate::Matrix| m.clone();
    let (_, captured) = model.forward_with_tap(phrase, layer, &identity)?;
    Ok(ContextVector {
        label: label.into(),
        layer,
        vector: captured.row_vector(captured.rows() - 1),
        provenance: Provenance::LastToken {
            phrase: phrase.to_vec(),
        },
    })
}

/// Mean of several phrases' last-token states at one tap.
///
/// Experimental: averaged phrase contexts behave less predictably than a
/// single phrase; prefer [`extract_phrase_context`].
pub fn extract_mean_phrase_context(
    model: &TinyTransformer,
    phrases: &[Vec<u32>],
    layer: usize,
    label: impl Into<String>,
) -> Result<ContextVector> {
    if phrases.is_empty() {
        return Err(Error::EmptyContextSet);
    }
    let mut states = Vec::with_capacity(phrases.len());
    for phrase in phrases {
        let ctx = extract_phrase_context(model, phrase, layer, "tmp")?;
        states.push(ctx.vector);
    }
    Ok(ContextVector {
        label: label.into(),
        layer,
        vector: mean_of(&states)?,
        provenance: Provenance::MeanOfSet {
            sample_count: phrases.len(),
        },
    })
}

/// Mean of raw feature vectors, recorded as a tap-0 context. Useful when the
/// features themselves are the representation of interest.
pub fn mean_feature_context(
    samples: &[Vector],
    label: impl Into<String>,
) -> Result<ContextVector> {
    if samples.is_empty() {
        return Err(Error::EmptyContextSet);
    }
    Ok(ContextVector {
        label: label.into(),
        layer: 0,
        vector: mean_of(samples)?,
        provenance: Provenance::MeanOfSet {
            sample_count: samples.len(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{DenseVector, SeededRng};
    use crate::Matrix;

    fn v(values: &[f64]) -> Vector {
        DenseVector::new(values.to_vec())
    }

    /// MLP whose first hidden layer is the identity on 2-dim inputs.
    fn identity_layer_mlp() -> MlpClassifier {
        let mut model = MlpClassifier::zeros(vec![2, 2, 2]).unwrap();
        let eye = Matrix::from_values(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        model.set_layer(0, eye, Vector::zeros(2)).unwrap();
        model
    }

    #[test]
    fn mean_under_identity_map() {
        let model = identity_layer_mlp();
        let samples = vec![v(&[1.0, 2.0]), v(&[3.0, 4.0])];
        let ctx = extract_mean_context(&model, &samples, 1, "a").unwrap();
        assert_eq!(ctx.vector.values(), &[2.0, 3.0]);
        assert_eq!(ctx.provenance, Provenance::MeanOfSet { sample_count: 2 });
    }

    #[test]
    fn singleton_set_gives_the_single_activation() {
        let model = identity_layer_mlp();
        let ctx = extract_mean_context(&model, &[v(&[5.0, 7.0])], 1, "s").unwrap();
        assert_eq!(ctx.vector.values(), &[5.0, 7.0]);
    }

    #[test]
    fn empty_set_is_rejected() {
        let model = identity_layer_mlp();
        assert!(matches!(
            extract_mean_context(&model, &[], 1, "x"),
            Err(Error::EmptyContextSet)
        ));
    }

    #[test]
    fn mean_context_matches_per_sample_oracle() {
        let root = SeededRng::new(0);
        let model = MlpClassifier::init(vec![4, 6, 6, 6, 3], &mut root.substream("init")).unwrap();
        let mut rng = SeededRng::new(40);
        let samples: Vec<Vector> = (0..8).map(|_| Vector::from_fn(4, |_| rng.normal())).collect();
        let ctx = extract_mean_context(&model, &samples, 2, "fixture").unwrap();

        // Independent route: tap each sample separately, average with the
        // kernel mean.
        let identity = |h: &Vector| h.clone();
        let taps: Vec<Vector> = samples
            .iter()
            .map(|x| model.forward_with_tap(x, 2, &identity).unwrap().1)
            .collect();
        let want = mean_of(&taps).unwrap();
        assert_eq!(ctx.vector.values(), want.values());
    }

    #[test]
    fn phrase_context_is_last_token_state() {
        let cfg = crate::nn::TransformerConfig {
            vocab_size: 9,
            model_dim: 8,
            layers: 2,
            heads: 2,
            context_len: 12,
        };
        let root = SeededRng::new(0);
        let model = TinyTransformer::init(cfg, &mut root.substream("init")).unwrap();

        // Single-token phrase: the context is that token's activation.
        let single = extract_phrase_context(&model, &[4], 1, "one").unwrap();
        let (_, cap) = model.forward_with_tap(&[4], 1, &|m: &Matrix| m.clone()).unwrap();
        assert_eq!(single.vector.values(), cap.row(0));

        // Fixture phrase: must match the tap capture bitwise.
        let phrase = [1u32, 2, 3, 4, 5];
        let ctx = extract_phrase_context(&model, &phrase, 2, "p").unwrap();
        let (_, cap) = model
            .forward_with_tap(&phrase, 2, &|m: &Matrix| m.clone())
            .unwrap();
        for (a, b) in ctx.vector.values().iter().zip(cap.row(4)) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        // A trailing token generally changes the context; record that the
        // two disagree rather than asserting any particular values.
        let longer = extract_phrase_context(&model, &[1, 2, 3, 4, 5, 6], 2, "p2").unwrap();
        assert_ne!(ctx.vector.values(), longer.vector.values());

        assert!(matches!(
            extract_phrase_context(&model, &[], 1, "e"),
            Err(Error::EmptyContextSet)
        ));
    }

    #[test]
    fn mean_phrase_context_averages_last_tokens() {
        let cfg = crate::nn::TransformerConfig {
            vocab_size: 9,
            model_dim: 8,
            layers: 2,
            heads: 2,
            context_len: 12,
        };
        let root = SeededRng::new(2);
        let model = TinyTransformer::init(cfg, &mut root.substream("init")).unwrap();
        let phrases = vec![vec![1u32, 2], vec![3u32, 4, 5]];
        let mean = extract_mean_phrase_context(&model, &phrases, 1, "m").unwrap();
        let a = extract_phrase_context(&model, &phrases[0], 1, "a").unwrap();
        let b = extract_phrase_context(&model, &phrases[1], 1, "b").unwrap();
        let want = mean_of(&[a.vector, b.vector]).unwrap();
        assert_eq!(mean.vector.values(), want.values());
    }
}
