//! Feed-forward classifier with tap points on every post-activation hidden
//! layer.
//!
//! Tap indexing: tap 0 is the raw input feature vector, tap `l` for
//! `l in 1..=hidden_count` is the output of hidden layer `l` after its ReLU.
//! A tapped forward with the identity transform runs exactly the same float
//! operations as a plain forward, so the two agree bitwise.

use crate::engine::steering::ResolvedSteering;
use crate::error::{Error, Result};
use crate::nn::params::{param_add, param_get, param_len, sgd_step, FlatTensors};
use crate::tensor::{argmax, matvec, relu, SeededRng};
use crate::{Matrix, Vector};

enum TapHook<'a> {
    None,
    Transform(usize, &'a dyn Fn(&Vector) -> Vector),
    Steer(&'a ResolvedSteering),
}

impl TapHook<'_> {
    fn tap(&self) -> Option<usize> {
        match self {
            TapHook::None => None,
            TapHook::Transform(tap, _) => Some(*tap),
            TapHook::Steer(s) => Some(s.layer),
        }
    }
}

/// A labeled feature vector.
pub type Example = (Vector, usize);

/// Training configuration for [`train_mlp`].
#[derive(Debug, Clone)]
pub struct MlpTrainConfig {
    /// Hidden layer widths; the input and output widths come from the data.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32, 32],
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// Feed-forward classifier: linear layers with ReLU between them, raw logits
/// at the output.
#[derive(Debug, Clone)]
pub struct MlpClassifier {
    widths: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vector>,
    final_train_accuracy: Option<f64>,
}

impl MlpClassifier {
    /// Zero-initialized classifier with the given widths
    /// (input, hidden..., output).
    pub fn zeros(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(
                "mlp needs at least input and output widths, all positive".into(),
            ));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in widths.windows(2) {
            weights.push(Matrix::zeros(pair[1], pair[0]));
            biases.push(Vector::zeros(pair[1]));
        }
        Ok(Self {
            widths,
            weights,
            biases,
            final_train_accuracy: None,
        })
    }

    /// Randomly initialized classifier (He-scaled normals, zero biases).
    pub fn init(widths: Vec<usize>, rng: &mut SeededRng) -> Result<Self> {
        let mut model = Self::zeros(widths)?;
        for w in &mut model.weights {
            let std = (2.0 / w.cols() as f64).sqrt();
            for x in w.values_mut() {
                *x = rng.normal() * std;
            }
        }
        Ok(model)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Number of hidden layers, which is also the largest valid tap index.
    pub fn hidden_count(&self) -> usize {
        self.widths.len() - 2
    }

    /// Width of the activation at a tap point.
    pub fn tap_width(&self, tap: usize) -> Result<usize> {
        if tap > self.hidden_count() {
            return Err(Error::Tap {
                tap,
                max: self.hidden_count(),
            });
        }
        Ok(self.widths[tap])
    }

    pub fn final_train_accuracy(&self) -> Option<f64> {
        self.final_train_accuracy
    }

    /// Direct access to a layer's weights and bias (layer 0 maps input to the
    /// first hidden width). Used by tests to build fixture models.
    pub fn set_layer(&mut self, layer: usize, weights: Matrix, bias: Vector) -> Result<()> {
        if weights.rows() != self.widths[layer + 1] || weights.cols() != self.widths[layer] {
            return Err(Error::Dimension {
                context: "mlp set_layer weights",
                expected: self.widths[layer + 1] * self.widths[layer],
                got: weights.rows() * weights.cols(),
            });
        }
        if bias.len() != self.widths[layer + 1] {
            return Err(Error::Dimension {
                context: "mlp set_layer bias",
                expected: self.widths[layer + 1],
                got: bias.len(),
            });
        }
        self.weights[layer] = weights;
        self.biases[layer] = bias;
        Ok(())
    }

    fn apply_hook(
        &self,
        h: Vector,
        at: usize,
        hook: &TapHook,
        captured: &mut Option<Vector>,
    ) -> Result<Vector> {
        match hook {
            TapHook::None => Ok(h),
            TapHook::Transform(tap, f) => {
                if *tap == at {
                    *captured = Some(h.clone());
                    Ok(f(&h))
                } else {
                    Ok(h)
                }
            }
            TapHook::Steer(steer) => {
                if steer.layer == at {
                    steer.apply(&h)
                } else {
                    Ok(h)
                }
            }
        }
    }

    fn forward_inner(&self, input: &Vector, hook: &TapHook) -> Result<(Vector, Option<Vector>)> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "mlp forward input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut captured = None;
        let mut h = input.clone();
        if hook.tap() == Some(0) {
            h = self.apply_hook(h, 0, hook, &mut captured)?;
        }
        let n_linear = self.weights.len();
        for l in 0..n_linear {
            let z = matvec(&self.weights[l], &h)?.add(&self.biases[l])?;
            if l + 1 < n_linear {
                h = relu(&z);
                if hook.tap() == Some(l + 1) {
                    h = self.apply_hook(h, l + 1, hook, &mut captured)?;
                }
            } else {
                h = z;
            }
        }
        Ok((h, captured))
    }

    /// Plain forward pass to logits.
    pub fn forward(&self, input: &Vector) -> Result<Vector> {
        Ok(self.forward_inner(input, &TapHook::None)?.0)
    }

    /// Forward pass with the activation at `tap` passed through `transform`
    /// before the remaining layers. Returns the logits and the pre-transform
    /// activation.
    pub fn forward_with_tap(
        &self,
        input: &Vector,
        tap: usize,
        transform: &dyn Fn(&Vector) -> Vector,
    ) -> Result<(Vector, Vector)> {
        self.tap_width(tap)?;
        let (logits, captured) =
            self.forward_inner(input, &TapHook::Transform(tap, transform))?;
        let h = captured.expect("tap index was validated");
        if logits.len() != self.output_dim() {
            return Err(Error::Dimension {
                context: "mlp tap transform output",
                expected: self.output_dim(),
                got: logits.len(),
            });
        }
        Ok((logits, h))
    }

    /// Forward pass with steering applied at the steering's tap. Runs the
    /// same float operations as the tapped forward but skips the capture
    /// copy, so it is the path evaluation loops should use.
    pub fn forward_steered(&self, input: &Vector, steer: &ResolvedSteering) -> Result<Vector> {
        self.tap_width(steer.layer)?;
        Ok(self.forward_inner(input, &TapHook::Steer(steer))?.0)
    }

    /// Predicted class for one input (argmax of logits, ties to the lowest
    /// index).
    pub fn predict(&self, input: &Vector) -> Result<usize> {
        Ok(argmax(self.forward(input)?.values()))
    }

    /// Ordered parameter views: per layer, weights then bias.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.values());
            out.push(b.values());
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.values_mut());
            out.push(b.values_mut());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        param_len(&self.param_slices())
    }

    pub fn param(&self, flat_idx: usize) -> f64 {
        param_get(&self.param_slices(), flat_idx)
    }

    pub fn param_add(&mut self, flat_idx: usize, delta: f64) {
        param_add(&mut self.param_slices_mut(), flat_idx, delta);
    }

    /// Mean cross-entropy of the batch under the current parameters.
    pub fn loss(&self, batch: &[Example]) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in batch {
            let logits = self.forward(x)?;
            total += cross_entropy(logits.values(), *y);
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &[Example]) -> Result<(f64, FlatTensors)> {
        let shape = self.param_slices();
        let mut grads = FlatTensors::zeros_like(&shape);
        let n_linear = self.weights.len();
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;

        for (x, y) in batch {
            // Forward, keeping every activation.
            if *y >= self.output_dim() {
                return Err(Error::Data(format!(
                    "label {y} outside {} classes",
                    self.output_dim()
                )));
            }
            let mut acts: Vec<Vector> = Vec::with_capacity(n_linear + 1);
            acts.push(x.clone());
            let mut pre: Vec<Vector> = Vec::with_capacity(n_linear);
            for l in 0..n_linear {
                let z = matvec(&self.weights[l], acts.last().unwrap())?.add(&self.biases[l])?;
                if l + 1 < n_linear {
                    acts.push(relu(&z));
                } else {
                    acts.push(z.clone());
                }
                pre.push(z);
            }
            let logits = acts.last().unwrap();
            total += cross_entropy(logits.values(), *y);

            // Backward: dlogits = softmax - onehot.
            let probs = crate::tensor::softmax(logits);
            let mut delta: Vec<f64> = probs.values().to_vec();
            delta[*y] -= 1.0;
            for d in delta.iter_mut() {
                *d *= scale;
            }

            for l in (0..n_linear).rev() {
                let h_in = &acts[l];
                // Weight and bias grads for layer l.
                {
                    let gw = grads.part_mut(2 * l);
                    let cols = self.widths[l];
                    for (i, &d) in delta.iter().enumerate() {
                        let row = &mut gw[i * cols..(i + 1) * cols];
                        for (g, &hv) in row.iter_mut().zip(h_in.values()) {
                            *g += d * hv;
                        }
                    }
                }
                {
                    let gb = grads.part_mut(2 * l + 1);
                    for (g, &d) in gb.iter_mut().zip(&delta) {
                        *g += d;
                    }
                }
                if l > 0 {
                    // dh = W^T delta, then gate by ReLU mask of the pre-activation.
                    let w = &self.weights[l];
                    let mut dh = vec![0.0; self.widths[l]];
                    for (i, &d) in delta.iter().enumerate() {
                        for (j, slot) in dh.iter_mut().enumerate() {
                            *slot += w.get(i, j) * d;
                        }
                    }
                    let z = &pre[l - 1];
                    for (slot, &zv) in dh.iter_mut().zip(z.values()) {
                        if zv <= 0.0 {
                            *slot = 0.0;
                        }
                    }
                    delta = dh;
                }
            }
        }
        Ok((total * scale, grads))
    }

    /// Fraction of examples whose predicted class matches the label.
    pub fn accuracy_on(&self, data: &[Example]) -> Result<f64> {
        let mut hits = 0usize;
        for (x, y) in data {
            if self.predict(x)? == *y {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let log_sum: f64 = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    log_sum - logits[target]
}

/// Trains a classifier with plain SGD over shuffled minibatches.
///
/// Deterministic given the seed: initialization and shuffling draw from named
/// substreams of one generator.
pub fn train_mlp(data: &[Example], config: &MlpTrainConfig) -> Result<MlpClassifier> {
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let input_dim = data[0].0.len();
    if data.iter().any(|(x, _)| x.len() != input_dim) {
        return Err(Error::Data("inconsistent feature dimensions".into()));
    }
    let classes = data.iter().map(|(_, y)| *y).max().unwrap() + 1;
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Config("epochs and batch size must be positive".into()));
    }

    let mut widths = vec![input_dim];
    widths.extend_from_slice(&config.hidden);
    widths.push(classes);

    let root = SeededRng::new(config.seed);
    let mut model = MlpClassifier::init(widths, &mut root.substream("init"))?;
    let mut shuffle_rng = root.substream("shuffle");

    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (_, grads) = model.loss_and_grad(&batch)?;
            sgd_step(&mut model.param_slices_mut(), &grads, config.learning_rate);
        }
    }
    model.final_train_accuracy = Some(model.accuracy_on(data)?);
    Ok(model)
}
