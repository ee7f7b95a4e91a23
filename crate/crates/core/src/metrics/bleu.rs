//! Pairwise BLEU between a steered rewrite and its source text.
//!
//! Clipped n-gram precision for n = 1..=max_n, geometric mean, brevity
//! penalty, no smoothing: a zero precision at any order zeroes the score,
//! which also covers candidates shorter than max_n. An empty candidate
//! scores 0.

use std::collections::HashMap;
use std::hash::Hash;

fn ngram_counts<T: Eq + Hash + Copy>(tokens: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU of `candidate` against a single `reference`, in [0, 1].
pub fn self_bleu<T: Eq + Hash + Copy>(candidate: &[T], reference: &[T], max_n: usize) -> f64 {
    assert!(max_n >= 1);
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let total: usize = cand.values().sum();
        if total == 0 {
            return 0.0;
        }
        let reference = ngram_counts(reference, n);
        let mut matches = 0usize;
        for (gram, count) in &cand {
            if let Some(&ref_count) = reference.get(gram) {
                matches += (*count).min(ref_count);
            }
        }
        if matches == 0 {
            return 0.0;
        }
        log_sum += (matches as f64 / total as f64).ln();
    }
    let precision = (log_sum / max_n as f64).exp();
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let brevity = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    brevity * precision
}
