//! Templated sentiment corpus with a lexicon oracle.
//!
//! Sentences come from fixed scaffolds whose polarity slots are filled from
//! exactly one side of the lexicon, so the oracle label is unambiguous by
//! construction and computable from surface tokens alone. The same scaffolds
//! serve both polarities, which keeps positive and negative sentences
//! parallel except at the slots.
//!
//! For the rewrite protocol a sentence becomes the sequence
//! `<bos> s <rewrite> s <eos>`: the model is trained to repeat the sentence
//! after the `<rewrite>` marker.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::SeededRng;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const REWRITE: &str = "<rewrite>";

const POSITIVE_LEXEMES: [&str; 8] = [
    "great",
    "wonderful",
    "amazing",
    "lovely",
    "excellent",
    "perfect",
    "delightful",
    "pleasant",
];

const NEGATIVE_LEXEMES: [&str; 8] = [
    "terrible",
    "awful",
    "horrible",
    "dreadful",
    "nasty",
    "disappointing",
    "unpleasant",
    "miserable",
];

/// Scaffolds with `*` marking a polarity slot.
const TEMPLATES_V1: [&str; 8] = [
    "honestly the food was * and the service was * overall",
    "the staff seemed * and the atmosphere felt * to us",
    "we thought the meal was truly * from start to finish",
    "i found the place * and the prices were * too",
    "the room looked * while the music sounded * that night",
    "our visit felt * because the drinks tasted * this time",
    "everything about the experience was * and we would say so again",
    "the service stayed * even when the kitchen got busy tonight",
];

/// Fixed word-level vocabulary with special tokens and polarity lexeme sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: BTreeMap<String, u32>,
    positive: Vec<u32>,
    negative: Vec<u32>,
    pub bos: u32,
    pub eos: u32,
    pub rewrite: u32,
}

/// Serializable form, stored in transformer checkpoints so generations can
/// be decoded later.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabSpec {
    pub words: Vec<String>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl Vocab {
    /// The built-in vocabulary of template set `v1`.
    pub fn v1() -> Self {
        let mut words: Vec<String> =
            vec![BOS.to_string(), EOS.to_string(), REWRITE.to_string()];
        let push = |w: &str, words: &mut Vec<String>| {
            if !words.iter().any(|x| x == w) {
                words.push(w.to_string());
            }
        };
        for template in TEMPLATES_V1 {
            for word in template.split_whitespace() {
                if word != "*" {
                    push(word, &mut words);
                }
            }
        }
        for w in POSITIVE_LEXEMES.iter().chain(NEGATIVE_LEXEMES.iter()) {
            push(w, &mut words);
        }
        Self::from_spec(&VocabSpec {
            words,
            positive: POSITIVE_LEXEMES.iter().map(|s| s.to_string()).collect(),
            negative: NEGATIVE_LEXEMES.iter().map(|s| s.to_string()).collect(),
        })
        .expect("built-in vocabulary is consistent")
    }

    pub fn from_spec(spec: &VocabSpec) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, w) in spec.words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary word {w:?}")));
            }
        }
        let lookup = |w: &String| {
            index
                .get(w)
                .copied()
                .ok_or_else(|| Error::Config(format!("lexeme {w:?} missing from vocabulary")))
        };
        let positive = spec.positive.iter().map(lookup).collect::<Result<_>>()?;
        let negative = spec.negative.iter().map(lookup).collect::<Result<_>>()?;
        let special = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("missing special token {name}")))
        };
        Ok(Self {
            bos: special(BOS)?,
            eos: special(EOS)?,
            rewrite: special(REWRITE)?,
            words: spec.words.clone(),
            index,
            positive,
            negative,
        })
    }

    pub fn to_spec(&self) -> VocabSpec {
        VocabSpec {
            words: self.words.clone(),
            positive: self.positive.iter().map(|&t| self.words[t as usize].clone()).collect(),
            negative: self.negative.iter().map(|&t| self.words[t as usize].clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn token(&self, word: &str) -> Result<u32> {
        self.index
            .get(word)
            .copied()
            .ok_or_else(|| Error::Data(format!("word {word:?} not in vocabulary")))
    }

    pub fn word(&self, token: u32) -> &str {
        &self.words[token as usize]
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        text.split_whitespace().map(|w| self.token(w)).collect()
    }

    pub fn decode(&self, tokens: &[u32]) -> String {
        tokens
            .iter()
            .map(|&t| self.word(t))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn is_positive(&self, token: u32) -> bool {
        self.positive.contains(&token)
    }

    pub fn is_negative(&self, token: u32) -> bool {
        self.negative.contains(&token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

/// Lexicon vote over surface tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleLabel {
    Positive,
    Negative,
    Undetermined,
}

impl From<Polarity> for OracleLabel {
    fn from(p: Polarity) -> Self {
        match p {
            Polarity::Positive => OracleLabel::Positive,
            Polarity::Negative => OracleLabel::Negative,
        }
    }
}

/// Counts positive versus negative lexemes; ties and zero hits are
/// undetermined.
pub fn oracle_label(tokens: &[u32], vocab: &Vocab) -> OracleLabel {
    let mut pos = 0usize;
    let mut neg = 0usize;
    for &t in tokens {
        if vocab.is_positive(t) {
            pos += 1;
        } else if vocab.is_negative(t) {
            neg += 1;
        }
    }
    match pos.cmp(&neg) {
        std::cmp::Ordering::Greater => OracleLabel::Positive,
        std::cmp::Ordering::Less => OracleLabel::Negative,
        std::cmp::Ordering::Equal => OracleLabel::Undetermined,
    }
}

/// One generated sentence with its construction polarity.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub tokens: Vec<u32>,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub size: usize,
    pub template_set: String,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            size: 500,
            template_set: "v1".into(),
            seed: 0,
        }
    }
}

/// Balanced, deterministic sentiment corpus with train and held-out splits.
#[derive(Debug, Clone)]
pub struct SentimentCorpus {
    pub vocab: Vocab,
    pub train: Vec<Sentence>,
    pub heldout: Vec<Sentence>,
    pub config: CorpusConfig,
}

pub fn gen_sentiment_corpus(config: &CorpusConfig) -> Result<SentimentCorpus> {
    if config.size == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    if config.template_set != "v1" {
        return Err(Error::Config(format!(
            "unknown template set {:?}",
            config.template_set
        )));
    }
    let vocab = Vocab::v1();
    let mut rng = SeededRng::new(config.seed).substream("sentences");

    let mut sentences = Vec::with_capacity(config.size);
    for i in 0..config.size {
        // Alternating polarity keeps the corpus exactly balanced.
        let polarity = if i % 2 == 0 {
            Polarity::Positive
        } else {
            Polarity::Negative
        };
        let lexemes: &[&str] = match polarity {
            Polarity::Positive => &POSITIVE_LEXEMES,
            Polarity::Negative => &NEGATIVE_LEXEMES,
        };
        let template = TEMPLATES_V1[rng.below(TEMPLATES_V1.len() as u64) as usize];
        let mut tokens = Vec::new();
        for word in template.split_whitespace() {
            let surface = if word == "*" {
                lexemes[rng.below(lexemes.len() as u64) as usize]
            } else {
                word
            };
            tokens.push(vocab.token(surface)?);
        }
        sentences.push(Sentence { tokens, polarity });
    }

    let train_len = (config.size * 4).div_ceil(5);
    let heldout = sentences.split_off(train_len.min(sentences.len()));
    Ok(SentimentCorpus {
        vocab,
        train: sentences,
        heldout,
        config: config.clone(),
    })
}

impl SentimentCorpus {
    /// `<bos> s <rewrite> s <eos>` sequences for training the copy task.
    pub fn copy_sequences(&self, sentences: &[Sentence]) -> Vec<Vec<u32>> {
        sentences
            .iter()
            .map(|s| {
                let mut seq = Vec::with_capacity(2 * s.tokens.len() + 3);
                seq.push(self.vocab.bos);
                seq.extend_from_slice(&s.tokens);
                seq.push(self.vocab.rewrite);
                seq.extend_from_slice(&s.tokens);
                seq.push(self.vocab.eos);
                seq
            })
            .collect()
    }

    /// `<bos> s <rewrite>` prompt asking the model to repeat `s`.
    pub fn rewrite_prompt(&self, sentence: &Sentence) -> Vec<u32> {
        let mut seq = Vec::with_capacity(sentence.tokens.len() + 2);
        seq.push(self.vocab.bos);
        seq.extend_from_slice(&sentence.tokens);
        seq.push(self.vocab.rewrite);
        seq
    }

    /// Longest copy-task sequence; the transformer context must cover it.
    pub fn max_sequence_len(&self) -> usize {
        self.train
            .iter()
            .chain(&self.heldout)
            .map(|s| 2 * s.tokens.len() + 3)
            .max()
            .unwrap_or(0)
    }
}

const CORPUS_SCHEMA: &str = "contxt.corpus.v1";

/// Writes sentences one per line with a polarity tag and a schema-version
/// header line.
pub fn write_corpus(
    path: &Path,
    sentences: &[Sentence],
    vocab: &Vocab,
    config_digest: &str,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# schema: {CORPUS_SCHEMA}\n"));
    out.push_str(&format!("# config_digest: {config_digest}\n"));
    for s in sentences {
        let tag = match s.polarity {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        };
        out.push_str(&format!("{tag}\t{}\n", vocab.decode(&s.tokens)));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads sentences written by [`write_corpus`].
pub fn read_corpus(path: &Path, vocab: &Vocab) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let schema = lines
        .next()
        .ok_or_else(|| Error::Format("empty corpus file".into()))?;
    if schema != format!("# schema: {CORPUS_SCHEMA}") {
        return Err(Error::Format(format!("unexpected corpus schema line {schema:?}")));
    }
    let mut out = Vec::new();
    for line in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (tag, sentence) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("malformed corpus line {line:?}")))?;
        let polarity = match tag {
            "positive" => Polarity::Positive,
            "negative" => Polarity::Negative,
            other => return Err(Error::Format(format!("unknown polarity tag {other:?}"))),
        };
        out.push(Sentence {
            tokens: vocab.encode(sentence)?,
            polarity,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_is_small_and_round_trips() {
        let vocab = Vocab::v1();
        assert!(vocab.len() <= 256, "vocab has {} words", vocab.len());
        let tokens = vocab.encode("the food was great").unwrap();
        assert_eq!(vocab.decode(&tokens), "the food was great");
        assert!(vocab.encode("zebra").is_err());
        let rebuilt = Vocab::from_spec(&vocab.to_spec()).unwrap();
        assert_eq!(rebuilt, vocab);
    }

    #[test]
    fn size_ten_seed_zero_is_balanced() {
        let corpus = gen_sentiment_corpus(&CorpusConfig {
            size: 10,
            template_set: "v1".into(),
            seed: 0,
        })
        .unwrap();
        let all: Vec<&Sentence> = corpus.train.iter().chain(&corpus.heldout).collect();
        assert_eq!(all.len(), 10);
        let pos = all.iter().filter(|s| s.polarity == Polarity::Positive).count();
        assert_eq!(pos, 5);
    }

    #[test]
    fn oracle_matches_template_polarity_on_every_sentence() {
        let corpus = gen_sentiment_corpus(&CorpusConfig {
            size: 200,
            template_set: "v1".into(),
            seed: 3,
        })
        .unwrap();
        for s in corpus.train.iter().chain(&corpus.heldout) {
            assert_eq!(oracle_label(&s.tokens, &corpus.vocab), s.polarity.into());
        }
    }

    #[test]
    fn same_seed_gives_identical_corpora() {
        let cfg = CorpusConfig {
            size: 50,
            template_set: "v1".into(),
            seed: 9,
        };
        let a = gen_sentiment_corpus(&cfg).unwrap();
        let b = gen_sentiment_corpus(&cfg).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.heldout, b.heldout);
    }

    #[test]
    fn unknown_template_set_is_a_config_error() {
        assert!(matches!(
            gen_sentiment_corpus(&CorpusConfig {
                size: 10,
                template_set: "v2".into(),
                seed: 0,
            }),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn oracle_edge_cases() {
        let vocab = Vocab::v1();
        assert_eq!(oracle_label(&[], &vocab), OracleLabel::Undetermined);
        let mixed = vocab.encode("great terrible").unwrap();
        assert_eq!(oracle_label(&mixed, &vocab), OracleLabel::Undetermined);
        let pos = vocab.encode("great wonderful").unwrap();
        assert_eq!(oracle_label(&pos, &vocab), OracleLabel::Positive);
    }

    #[test]
    fn oracle_is_invariant_under_corpus_shuffling() {
        let corpus = gen_sentiment_corpus(&CorpusConfig {
            size: 40,
            template_set: "v1".into(),
            seed: 1,
        })
        .unwrap();
        let mut shuffled: Vec<Sentence> = corpus.train.clone();
        shuffled.reverse();
        for s in &shuffled {
            assert_eq!(oracle_label(&s.tokens, &corpus.vocab), s.polarity.into());
        }
    }

    #[test]
    fn copy_sequences_wrap_the_sentence_twice() {
        let corpus = gen_sentiment_corpus(&CorpusConfig {
            size: 4,
            template_set: "v1".into(),
            seed: 0,
        })
        .unwrap();
        let seqs = corpus.copy_sequences(&corpus.train);
        let s = &corpus.train[0];
        let seq = &seqs[0];
        assert_eq!(seq[0], corpus.vocab.bos);
        assert_eq!(seq[s.tokens.len() + 1], corpus.vocab.rewrite);
        assert_eq!(*seq.last().unwrap(), corpus.vocab.eos);
        assert_eq!(&seq[1..=s.tokens.len()], s.tokens.as_slice());
        assert_eq!(
            &seq[s.tokens.len() + 2..seq.len() - 1],
            s.tokens.as_slice()
        );
        assert!(corpus.max_sequence_len() <= 64);
    }

    #[test]
    fn corpus_file_round_trips() {
        let corpus = gen_sentiment_corpus(&CorpusConfig {
            size: 12,
            template_set: "v1".into(),
            seed: 7,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.txt");
        write_corpus(&path, &corpus.train, &corpus.vocab, "digest").unwrap();
        let loaded = read_corpus(&path, &corpus.vocab).unwrap();
        assert_eq!(loaded, corpus.train);
    }
}
