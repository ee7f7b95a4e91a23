//! Layer-by-magnitude generation sweep.
//!
//! Each prompt is a rewrite task over one corpus sentence. The steering
//! context opposes the sentence's polarity: negative sentences get the
//! positive phrase context and vice versa. Every cell rewrites every prompt,
//! then measures flip rate against the source labels and BLEU against the
//! source text. The magnitude-0 cell is the unsteered baseline condition.

use serde::{Deserialize, Serialize};

use crate::engine::{extract_phrase_context, ResolvedSteering};
use crate::error::{Error, Result};
use crate::metrics::{self_bleu, GenerationEvalReport, GenerationRecord};
use crate::nn::TinyTransformer;
use crate::synth::{oracle_label, OracleLabel, Sentence, SentimentCorpus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSweepConfig {
    pub layers: Vec<usize>,
    /// Steering magnitudes; must include 0 for the baseline condition.
    pub magnitudes: Vec<f64>,
    /// Context phrase injected into negative prompts (token ids).
    pub positive_phrase: Vec<u32>,
    /// Context phrase injected into positive prompts.
    pub negative_phrase: Vec<u32>,
    /// Also remove the prompt's own polarity context at the same magnitude.
    /// The two terms cancel the phrases' shared syntax components, leaving a
    /// near-pure polarity shift, which widens the effective band on the toy
    /// model considerably.
    #[serde(default)]
    pub remove_own: bool,
    pub max_tokens: usize,
    pub seed: u64,
}

impl GenSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.magnitudes.is_empty() {
            return Err(Error::Config("layer and magnitude lists must be nonempty".into()));
        }
        if !self.magnitudes.contains(&0.0) {
            return Err(Error::Config("magnitude list must include 0".into()));
        }
        if self.positive_phrase.is_empty() || self.negative_phrase.is_empty() {
            return Err(Error::EmptyContextSet);
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// One sweep cell with its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenCell {
    pub layer: usize,
    pub magnitude: f64,
    pub report: GenerationEvalReport,
}

/// Rewrites one sentence under optional steering and evaluates the result.
pub fn rewrite_record(
    model: &TinyTransformer,
    corpus: &SentimentCorpus,
    sentence: &Sentence,
    steer: Option<&ResolvedSteering>,
    max_tokens: usize,
) -> Result<GenerationRecord> {
    let prompt = corpus.rewrite_prompt(sentence);
    let full = model.generate(&prompt, steer, max_tokens, Some(corpus.vocab.eos))?;
    let mut output: Vec<u32> = full[prompt.len()..].to_vec();
    if output.last() == Some(&corpus.vocab.eos) {
        output.pop();
    }
    let label_before = oracle_label(&sentence.tokens, &corpus.vocab);
    let label_after = if output.is_empty() {
        OracleLabel::Undetermined
    } else {
        oracle_label(&output, &corpus.vocab)
    };
    let bleu = self_bleu(&output, &sentence.tokens, 4);
    Ok(GenerationRecord {
        prompt: sentence.tokens.clone(),
        output,
        label_before,
        label_after,
        self_bleu: bleu,
    })
}

/// Runs every (layer, magnitude) cell over the prompt set.
pub fn run_generation_sweep(
    model: &TinyTransformer,
    corpus: &SentimentCorpus,
    prompts: &[Sentence],
    config: &GenSweepConfig,
) -> Result<Vec<GenCell>> {
    config.validate()?;
    if prompts.is_empty() {
        return Err(Error::Data("prompt set is empty".into()));
    }

    let mut cells = Vec::with_capacity(config.layers.len() * config.magnitudes.len());
    for &layer in &config.layers {
        // One cacheable extraction pass per (phrase, layer).
        let positive = extract_phrase_context(model, &config.positive_phrase, layer, "positive")?;
        let negative = extract_phrase_context(model, &config.negative_phrase, layer, "negative")?;
        for &magnitude in &config.magnitudes {
            let mut records = Vec::with_capacity(prompts.len());
            for sentence in prompts {
                // Steer against the prompt's own polarity.
                let (inject, remove) = match oracle_label(&sentence.tokens, &corpus.vocab) {
                    OracleLabel::Negative => (&positive, &negative),
                    _ => (&negative, &positive),
                };
                let mut terms = vec![(magnitude, inject.vector.clone())];
                if config.remove_own {
                    terms.push((-magnitude, remove.vector.clone()));
                }
                let steer = ResolvedSteering { layer, terms };
                records.push(rewrite_record(
                    model,
                    corpus,
                    sentence,
                    Some(&steer),
                    config.max_tokens,
                )?);
            }
            cells.push(GenCell {
                layer,
                magnitude,
                report: GenerationEvalReport::from_records(records),
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_sentiment_corpus, CorpusConfig};
    use crate::tensor::SeededRng;

    fn fixture() -> (TinyTransformer, SentimentCorpus) {
        let corpus = gen_sentiment_corpus(&CorpusConfig {
            size: 20,
            template_set: "v1".into(),
            seed: 0,
        })
        .unwrap();
        let cfg = crate::nn::TransformerConfig {
            vocab_size: corpus.vocab.len(),
            model_dim: 16,
            layers: 2,
            heads: 2,
            context_len: 64,
        };
        let root = SeededRng::new(1);
        let model = TinyTransformer::init(cfg, &mut root.substream("init")).unwrap();
        (model, corpus)
    }

    #[test]
    fn magnitude_zero_cell_matches_unsteered_generation_bitwise() {
        let (model, corpus) = fixture();
        let prompts: Vec<Sentence> = corpus.heldout.iter().take(3).cloned().collect();
        let config = GenSweepConfig {
            layers: vec![1],
            magnitudes: vec![0.0, 0.5],
            positive_phrase: corpus.vocab.encode("wonderful amazing perfect").unwrap(),
            negative_phrase: corpus.vocab.encode("terrible awful horrible").unwrap(),
            remove_own: false,
            max_tokens: 16,
            seed: 0,
        };
        let cells = run_generation_sweep(&model, &corpus, &prompts, &config).unwrap();
        let zero_cell = cells.iter().find(|c| c.magnitude == 0.0).unwrap();
        for (record, sentence) in zero_cell.report.records.iter().zip(&prompts) {
            let unsteered = rewrite_record(&model, &corpus, sentence, None, 16).unwrap();
            assert_eq!(record.output, unsteered.output);
        }
    }

    #[test]
    fn magnitude_list_must_include_zero() {
        let (model, corpus) = fixture();
        let prompts: Vec<Sentence> = corpus.heldout.iter().take(1).cloned().collect();
        let config = GenSweepConfig {
            layers: vec![1],
            magnitudes: vec![0.5],
            positive_phrase: vec![3],
            negative_phrase: vec![4],
            remove_own: false,
            max_tokens: 8,
            seed: 0,
        };
        assert!(matches!(
            run_generation_sweep(&model, &corpus, &prompts, &config),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn oversized_prompt_surfaces_context_length_error() {
        let (model, corpus) = fixture();
        let long = Sentence {
            tokens: vec![corpus.vocab.bos; 70],
            polarity: crate::synth::Polarity::Positive,
        };
        assert!(matches!(
            rewrite_record(&model, &corpus, &long, None, 4),
            Err(Error::ContextLength { .. })
        ));
    }
}
