//! Evaluation measures: per-domain accuracy with deltas, max-softmax
//! confidence, sentiment flip rate, and pairwise BLEU.

pub mod bleu;

pub use bleu::self_bleu;

use serde::{Deserialize, Serialize};

use crate::engine::ResolvedSteering;
use crate::error::{Error, Result};
use crate::nn::MlpClassifier;
use crate::synth::{OracleLabel, Sample};
use crate::tensor::{argmax, softmax};
use crate::Vector;

/// Logits with optional steering applied at the steering's tap.
///
/// A steering value whose terms all have zero strength produces logits
/// bitwise equal to the plain forward pass.
pub fn steered_logits(
    model: &MlpClassifier,
    input: &Vector,
    steer: Option<&ResolvedSteering>,
) -> Result<Vector> {
    match steer {
        None => model.forward(input),
        Some(s) => model.forward_steered(input, s),
    }
}

/// Fraction of examples whose argmax logit matches the label; ties break to
/// the lowest class index.
pub fn accuracy(
    model: &MlpClassifier,
    examples: &[(Vector, usize)],
    steer: Option<&ResolvedSteering>,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Data("empty evaluation split".into()));
    }
    let mut hits = 0usize;
    for (x, y) in examples {
        let logits = steered_logits(model, x, steer)?;
        if argmax(logits.values()) == *y {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Top-1 class and its softmax probability.
pub fn max_softmax_confidence(
    model: &MlpClassifier,
    input: &Vector,
    steer: Option<&ResolvedSteering>,
) -> Result<(usize, f64)> {
    let logits = steered_logits(model, input, steer)?;
    let probs = softmax(&logits);
    let top = argmax(probs.values());
    Ok((top, probs.values()[top]))
}

/// Accuracy of one domain within an evaluation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainEval {
    pub domain: usize,
    pub accuracy: f64,
    pub sample_count: usize,
    /// Steered minus baseline, when a baseline was attached.
    pub delta: Option<f64>,
}

/// Per-domain accuracies with an unweighted mean over domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub domains: Vec<DomainEval>,
    pub mean_accuracy: f64,
    pub baseline_name: Option<String>,
    pub mean_delta: Option<f64>,
}

impl EvalReport {
    /// Builds a report from (domain, accuracy, sample count) rows. The mean
    /// is unweighted over domains, not over samples.
    pub fn from_rows(mut rows: Vec<(usize, f64, usize)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("report needs at least one domain".into()));
        }
        rows.sort_by_key(|r| r.0);
        let mean = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
        Ok(Self {
            domains: rows
                .into_iter()
                .map(|(domain, accuracy, sample_count)| DomainEval {
                    domain,
                    accuracy,
                    sample_count,
                    delta: None,
                })
                .collect(),
            mean_accuracy: mean,
            baseline_name: None,
            mean_delta: None,
        })
    }

    /// Attaches per-domain deltas (self minus baseline, exactly).
    pub fn with_baseline(mut self, baseline: &EvalReport, name: impl Into<String>) -> Result<Self> {
        if baseline.domains.len() != self.domains.len() {
            return Err(Error::Data("baseline covers different domains".into()));
        }
        let mut delta_sum = 0.0;
        for (mine, base) in self.domains.iter_mut().zip(&baseline.domains) {
            if mine.domain != base.domain {
                return Err(Error::Data("baseline covers different domains".into()));
            }
            let delta = mine.accuracy - base.accuracy;
            delta_sum += delta;
            mine.delta = Some(delta);
        }
        self.mean_delta = Some(delta_sum / self.domains.len() as f64);
        self.baseline_name = Some(name.into());
        Ok(self)
    }

    pub fn domain_count(&self) -> usize {
        self.domains.len()
    }
}

/// Flip statistics over (label before, label after) pairs. Pairs with an
/// undetermined label on either side are excluded from the rate and counted
/// separately; an all-undetermined set has rate 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipStats {
    pub flip_rate: f64,
    pub determined: usize,
    pub undetermined: usize,
}

pub fn flip_rate(pairs: &[(OracleLabel, OracleLabel)]) -> FlipStats {
    let mut determined = 0usize;
    let mut flips = 0usize;
    let mut undetermined = 0usize;
    for (before, after) in pairs {
        if *before == OracleLabel::Undetermined || *after == OracleLabel::Undetermined {
            undetermined += 1;
        } else {
            determined += 1;
            if before != after {
                flips += 1;
            }
        }
    }
    FlipStats {
        flip_rate: if determined == 0 {
            0.0
        } else {
            flips as f64 / determined as f64
        },
        determined,
        undetermined,
    }
}

/// One prompt's steered rewrite and its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub prompt: Vec<u32>,
    pub output: Vec<u32>,
    pub label_before: OracleLabel,
    pub label_after: OracleLabel,
    pub self_bleu: f64,
}

/// Aggregate over a set of generation records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationEvalReport {
    pub flip_rate: f64,
    pub determined: usize,
    pub undetermined: usize,
    pub mean_self_bleu: f64,
    pub records: Vec<GenerationRecord>,
}

impl GenerationEvalReport {
    pub fn from_records(records: Vec<GenerationRecord>) -> Self {
        let pairs: Vec<(OracleLabel, OracleLabel)> = records
            .iter()
            .map(|r| (r.label_before, r.label_after))
            .collect();
        let stats = flip_rate(&pairs);
        let mean_self_bleu = if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| r.self_bleu).sum::<f64>() / records.len() as f64
        };
        Self {
            flip_rate: stats.flip_rate,
            determined: stats.determined,
            undetermined: stats.undetermined,
            mean_self_bleu,
            records,
        }
    }
}

/// Mean next-token cross-entropy of an add-one-smoothed unigram model fit on
/// `train`, evaluated on the same positions a language model is scored on.
pub fn unigram_cross_entropy(train: &[Vec<u32>], eval: &[Vec<u32>], vocab_size: usize) -> f64 {
    let mut counts = vec![0usize; vocab_size];
    let mut total = 0usize;
    for seq in train {
        for &t in seq {
            counts[t as usize] += 1;
            total += 1;
        }
    }
    let denom = (total + vocab_size) as f64;
    let mut loss = 0.0;
    let mut positions = 0usize;
    for seq in eval {
        for &t in &seq[1..] {
            let p = (counts[t as usize] + 1) as f64 / denom;
            loss -= p.ln();
            positions += 1;
        }
    }
    loss / positions as f64
}

/// Mean accuracy over domains: groups a split by domain, evaluates each with
/// its own steering, and averages unweighted.
pub fn mean_domain_accuracy(
    model: &MlpClassifier,
    samples: &[Sample],
    steer_for_domain: impl Fn(usize) -> Option<ResolvedSteering>,
) -> Result<EvalReport> {
    let mut domains: Vec<usize> = samples.iter().map(|s| s.domain).collect();
    domains.sort_unstable();
    domains.dedup();
    if domains.is_empty() {
        return Err(Error::Data("empty evaluation split".into()));
    }
    let mut rows = Vec::with_capacity(domains.len());
    for &d in &domains {
        let examples: Vec<(Vector, usize)> = samples
            .iter()
            .filter(|s| s.domain == d)
            .map(|s| (s.features.clone(), s.class))
            .collect();
        let steer = steer_for_domain(d);
        let acc = accuracy(model, &examples, steer.as_ref())?;
        rows.push((d, acc, examples.len()));
    }
    EvalReport::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{train_mlp, MlpTrainConfig};
    use crate::tensor::SeededRng;

    #[test]
    fn perfect_memorization_scores_one() {
        let data: Vec<(Vector, usize)> = (0..16)
            .map(|i| {
                let y = i % 2;
                let c = if y == 0 { -2.0 } else { 2.0 };
                (Vector::new(vec![c, c]), y)
            })
            .collect();
        let model = train_mlp(
            &data,
            &MlpTrainConfig {
                hidden: vec![8],
                epochs: 30,
                batch_size: 8,
                learning_rate: 0.1,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(accuracy(&model, &data, None).unwrap(), 1.0);
    }

    #[test]
    fn random_model_on_unstructured_data_is_near_chance() {
        // Round-robin labels on isotropic noise: predictions are independent
        // of the labels, so accuracy is Binomial(n, 1/c) / n.
        let root = SeededRng::new(0);
        let model = MlpClassifier::init(vec![8, 16, 16, 16, 7], &mut root.substream("init")).unwrap();
        let mut rng = SeededRng::new(314);
        let data: Vec<(Vector, usize)> = (0..840)
            .map(|i| (Vector::from_fn(8, |_| rng.normal()), i % 7))
            .collect();
        let acc = accuracy(&model, &data, None).unwrap();
        let p = 1.0 / 7.0;
        let sigma = (p * (1.0 - p) / 840.0_f64).sqrt();
        assert!(
            (acc - p).abs() <= 3.0 * sigma,
            "accuracy {acc} outside 3 sigma of {p}"
        );
    }

    #[test]
    fn zero_strength_steering_preserves_accuracy_and_argmax_bitwise() {
        let root = SeededRng::new(1);
        let model = MlpClassifier::init(vec![4, 8, 8, 8, 3], &mut root.substream("init")).unwrap();
        let mut rng = SeededRng::new(2);
        let data: Vec<(Vector, usize)> = (0..50)
            .map(|i| (Vector::from_fn(4, |_| rng.normal()), i % 3))
            .collect();
        let steer = ResolvedSteering {
            layer: 1,
            terms: vec![(0.0, Vector::zeros(8)), (0.0, Vector::new(vec![9.0; 8]))],
        };
        for (x, _) in &data {
            let plain = model.forward(x).unwrap();
            let steered = steered_logits(&model, x, Some(&steer)).unwrap();
            for (a, b) in plain.values().iter().zip(steered.values()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            assert_eq!(argmax(plain.values()), argmax(steered.values()));
        }
        let a = accuracy(&model, &data, None).unwrap();
        let b = accuracy(&model, &data, Some(&steer)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn confidence_closed_forms() {
        // Model computing fixed logits [0, ln 3] via zero weights and bias.
        let mut model = MlpClassifier::zeros(vec![2, 2, 2]).unwrap();
        model
            .set_layer(
                1,
                crate::Matrix::zeros(2, 2),
                Vector::new(vec![0.0, 3.0f64.ln()]),
            )
            .unwrap();
        let x = Vector::new(vec![0.0, 0.0]);
        let (class, conf) = max_softmax_confidence(&model, &x, None).unwrap();
        assert_eq!(class, 1);
        assert!((conf - 0.75).abs() < 1e-12);

        // Uniform logits give confidence 1/classes with the lowest index.
        let model = MlpClassifier::zeros(vec![2, 2, 4]).unwrap();
        let (class, conf) = max_softmax_confidence(&model, &x, None).unwrap();
        assert_eq!(class, 0);
        assert!((conf - 0.25).abs() < 1e-12);
    }

    #[test]
    fn flip_rate_edges_and_symmetry() {
        use OracleLabel::*;
        let same = vec![(Positive, Positive), (Negative, Negative)];
        assert_eq!(flip_rate(&same).flip_rate, 0.0);
        let flipped = vec![(Positive, Negative), (Negative, Positive)];
        assert_eq!(flip_rate(&flipped).flip_rate, 1.0);
        let mixed = vec![
            (Positive, Negative),
            (Positive, Positive),
            (Undetermined, Positive),
            (Negative, Undetermined),
        ];
        let stats = flip_rate(&mixed);
        assert_eq!(stats.determined, 2);
        assert_eq!(stats.undetermined, 2);
        assert!((stats.flip_rate - 0.5).abs() < 1e-15);
        // Symmetric in which run is called baseline.
        let swapped: Vec<(OracleLabel, OracleLabel)> =
            mixed.iter().map(|&(a, b)| (b, a)).collect();
        assert_eq!(flip_rate(&swapped).flip_rate, stats.flip_rate);
        assert_eq!(flip_rate(&[]).flip_rate, 0.0);
    }

    #[test]
    fn report_deltas_are_consistent_with_the_mean() {
        let baseline =
            EvalReport::from_rows(vec![(0, 0.9, 10), (1, 0.5, 10), (2, 0.25, 10), (3, 0.75, 10)])
                .unwrap();
        let steered =
            EvalReport::from_rows(vec![(0, 0.9, 10), (1, 0.75, 10), (2, 0.5, 10), (3, 0.8, 10)])
                .unwrap()
                .with_baseline(&baseline, "unsteered")
                .unwrap();
        let sum: f64 = steered.domains.iter().map(|d| d.delta.unwrap()).sum();
        let d = steered.domain_count() as f64;
        // Mean is defined as sum/count; with a power-of-two domain count the
        // product form is exact too.
        assert_eq!(steered.mean_delta.unwrap().to_bits(), (sum / d).to_bits());
        assert_eq!((steered.mean_delta.unwrap() * d).to_bits(), sum.to_bits());
    }

    #[test]
    fn unigram_baseline_is_finite_and_positive() {
        let train = vec![vec![0u32, 1, 2, 1, 0], vec![2u32, 1, 0]];
        let eval = vec![vec![0u32, 1, 2]];
        let ce = unigram_cross_entropy(&train, &eval, 4);
        assert!(ce.is_finite() && ce > 0.0);
    }
}
