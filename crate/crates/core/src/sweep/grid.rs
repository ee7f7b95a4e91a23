//! Two-parameter sweep: in-domain injection strength against out-of-domain
//! removal strength.
//!
//! Every cell evaluates unweighted mean accuracy over domains, where a
//! sample from domain d is steered by injecting the source context and
//! removing domain d's own context at the configured tap. Cells are pure
//! jobs over shared read-only state; a bounded worker pool evaluates them
//! and any schedule yields identical results.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{ContextCache, ResolvedSteering};
use crate::error::{Error, Result};
use crate::metrics::{mean_domain_accuracy, EvalReport};
use crate::nn::MlpClassifier;
use crate::synth::Sample;

/// Grid axes and the context labels the protocol steers with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSweepConfig {
    /// Horizontal axis: in-domain injection strengths. Must include 0.
    pub inject_strengths: Vec<f64>,
    /// Vertical axis: out-of-domain removal strengths. Must include 0.
    pub removal_strengths: Vec<f64>,
    pub layer: usize,
    /// Label of the injected (source domain) context.
    pub source_label: String,
    /// Removal label per domain id; the evaluated domain removes its own.
    pub domain_labels: Vec<String>,
    pub metric: String,
    pub parallelism: usize,
    pub seed: u64,
}

impl GridSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inject_strengths.is_empty() || self.removal_strengths.is_empty() {
            return Err(Error::Config("strength lists must be nonempty".into()));
        }
        if !self.inject_strengths.contains(&0.0) || !self.removal_strengths.contains(&0.0) {
            return Err(Error::Config(
                "both strength lists must include 0 so the baseline cell exists".into(),
            ));
        }
        if self.domain_labels.is_empty() {
            return Err(Error::Config("domain label list must be nonempty".into()));
        }
        if self.metric != "mean_accuracy" {
            return Err(Error::Config(format!("unknown metric {:?}", self.metric)));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

/// Grid of metric values and deltas against the (0, 0) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub inject_strengths: Vec<f64>,
    pub removal_strengths: Vec<f64>,
    /// Metric value per cell, indexed [removal][inject].
    pub values: Vec<Vec<f64>>,
    /// Value minus the (0, 0) cell; exactly 0 there.
    pub deltas: Vec<Vec<f64>>,
    pub baseline: f64,
    /// (removal index, inject index) of the best delta; ties prefer the
    /// smallest removal strength, then the smallest injection strength.
    pub argmax: (usize, usize),
    pub config_digest: String,
    pub model_digest: String,
    pub context_digest: String,
}

impl SweepResult {
    pub fn argmax_strengths(&self) -> (f64, f64) {
        (
            self.removal_strengths[self.argmax.0],
            self.inject_strengths[self.argmax.1],
        )
    }

    pub fn delta_at(&self, removal_idx: usize, inject_idx: usize) -> f64 {
        self.deltas[removal_idx][inject_idx]
    }
}

/// Steering for one evaluated domain at one grid cell: inject the source
/// context, remove the domain's own context.
fn cell_steering(
    cache: &ContextCache,
    layer: usize,
    source_label: &str,
    domain_label: &str,
    inject: f64,
    removal: f64,
) -> Result<ResolvedSteering> {
    let source = cache.get(layer, source_label)?;
    let domain = cache.get(layer, domain_label)?;
    Ok(ResolvedSteering {
        layer,
        terms: vec![
            (inject, source.vector.clone()),
            (-removal, domain.vector.clone()),
        ],
    })
}

fn mean_accuracy_at(
    model: &MlpClassifier,
    samples: &[Sample],
    cache: &ContextCache,
    config: &GridSweepConfig,
    inject: f64,
    removal: f64,
) -> Result<f64> {
    let report = mean_domain_accuracy(model, samples, |domain| {
        let label = &config.domain_labels[domain];
        Some(
            cell_steering(cache, config.layer, &config.source_label, label, inject, removal)
                .expect("contexts were validated before the sweep"),
        )
    })?;
    Ok(report.mean_accuracy)
}

/// Runs the full grid on an evaluation split.
pub fn run_grid_sweep(
    model: &MlpClassifier,
    samples: &[Sample],
    cache: &ContextCache,
    config: &GridSweepConfig,
) -> Result<SweepResult> {
    config.validate()?;
    // Fail fast on missing contexts or empty domains before spawning work.
    cache.get(config.layer, &config.source_label)?;
    for label in &config.domain_labels {
        cache.get(config.layer, label)?;
    }
    for (d, _) in config.domain_labels.iter().enumerate() {
        if !samples.iter().any(|s| s.domain == d) {
            return Err(Error::Data(format!("no samples for domain {d}")));
        }
    }

    let n_rows = config.removal_strengths.len();
    let n_cols = config.inject_strengths.len();
    let cells: Vec<(usize, usize)> = (0..n_rows)
        .flat_map(|r| (0..n_cols).map(move |i| (r, i)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<f64>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(r, i)| {
                mean_accuracy_at(
                    model,
                    samples,
                    cache,
                    config,
                    config.inject_strengths[i],
                    config.removal_strengths[r],
                )
            })
            .collect()
    });

    let mut values = vec![vec![0.0; n_cols]; n_rows];
    for ((r, i), value) in cells.into_iter().zip(results) {
        values[r][i] = value?;
    }

    let zero_row = config
        .removal_strengths
        .iter()
        .position(|&x| x == 0.0)
        .expect("validated");
    let zero_col = config
        .inject_strengths
        .iter()
        .position(|&x| x == 0.0)
        .expect("validated");
    let baseline = values[zero_row][zero_col];
    let deltas: Vec<Vec<f64>> = values
        .iter()
        .map(|row| row.iter().map(|v| v - baseline).collect())
        .collect();

    // Row-major ascending scan with strict > keeps the smallest removal,
    // then smallest injection, on ties.
    let mut argmax = (0usize, 0usize);
    let mut best = f64::NEG_INFINITY;
    for (r, row) in deltas.iter().enumerate() {
        for (i, &delta) in row.iter().enumerate() {
            if delta > best {
                best = delta;
                argmax = (r, i);
            }
        }
    }

    let config_digest =
        crate::binio::short_digest(&serde_json::to_vec(config).expect("config serializes"));
    Ok(SweepResult {
        inject_strengths: config.inject_strengths.clone(),
        removal_strengths: config.removal_strengths.clone(),
        values,
        deltas,
        baseline,
        argmax,
        config_digest,
        model_digest: cache.model_digest().to_string(),
        context_digest: cache.digest(),
    })
}

/// Re-evaluates per-domain accuracy at the sweep's argmax cell against the
/// unsteered baseline, on a fresh split.
pub fn domain_delta_at_optimum(
    sweep: &SweepResult,
    model: &MlpClassifier,
    samples: &[Sample],
    cache: &ContextCache,
    config: &GridSweepConfig,
) -> Result<EvalReport> {
    let (removal, inject) = sweep.argmax_strengths();
    let baseline = mean_domain_accuracy(model, samples, |_| None)?;
    let steered = mean_domain_accuracy(model, samples, |domain| {
        let label = &config.domain_labels[domain];
        Some(
            cell_steering(cache, config.layer, &config.source_label, label, inject, removal)
                .expect("contexts were validated by the sweep"),
        )
    })?;
    steered.with_baseline(&baseline, "unsteered")
}
