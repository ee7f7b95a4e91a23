//! Deterministic synthetic data: a multi-domain classification benchmark
//! with a planted context shift, and a templated sentiment corpus with a
//! lexicon oracle.

pub mod domain_shift;
pub mod sentiment;

pub use domain_shift::{
    gen_domain_shift, read_split_csv, write_split_csv, DomainShiftConfig, DomainShiftDataset,
    Sample, Split,
};
pub use sentiment::{
    gen_sentiment_corpus, oracle_label, read_corpus, write_corpus, CorpusConfig, OracleLabel,
    Polarity, Sentence, SentimentCorpus, Vocab, VocabSpec,
};
