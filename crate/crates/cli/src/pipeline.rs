//! The six pipeline commands. Each one reads its inputs from the run
//! directory, writes its outputs under fixed names, and embeds the resolved
//! config digest in everything it produces.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Result;
use serde::{Deserialize, Serialize};

use contxt_core::engine::{
    extract_mean_context, extract_phrase_context, resolve, ContextCache, ResolvedSteering,
    SteeringSpec,
};
use contxt_core::error::Error;
use contxt_core::metrics::{mean_domain_accuracy, EvalReport};
use contxt_core::nn::{
    train_mlp, train_tiny_transformer, Checkpoint, MlpClassifier, MlpTrainConfig, Provenance,
    TinyTransformer, TransformerConfig, TransformerTrainConfig,
};
use contxt_core::sweep::{
    domain_delta_at_optimum, emit_generation_csv, emit_grid_csv, rewrite_record,
    run_generation_sweep, run_grid_sweep, write_manifest, GenSweepConfig, GridSweepConfig,
    RunManifest,
};
use contxt_core::synth::{
    gen_domain_shift, gen_sentiment_corpus, read_corpus, read_split_csv, write_corpus,
    write_split_csv, Sample, Sentence, SentimentCorpus, Vocab, VocabSpec,
};
use contxt_core::tensor::RNG_ALGORITHM;
use contxt_core::Vector;

use crate::config::{RunConfig, SteeringMode};

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Data(format!(
            "missing artifact {}: run `contxt {produced_by}` first",
            path.display()
        ))
        .into());
    }
    Ok(())
}

fn require_cache(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::CacheFormat(format!(
            "missing context cache {}: run `contxt extract-context` first",
            path.display()
        ))
        .into());
    }
    Ok(())
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn cmd_gen_data(config: &RunConfig) -> Result<()> {
    config.write_resolved()?;
    fs::create_dir_all(config.data_dir())?;
    let digest = config.digest();

    let dataset = gen_domain_shift(&config.dataset_config())?;
    write_split_csv(&config.split_path("train"), &dataset.train, &digest)?;
    write_split_csv(&config.split_path("val"), &dataset.validation, &digest)?;
    write_split_csv(&config.split_path("test"), &dataset.test, &digest)?;

    let corpus = gen_sentiment_corpus(&config.corpus_config())?;
    write_corpus(&config.corpus_path("train"), &corpus.train, &corpus.vocab, &digest)?;
    write_corpus(&config.corpus_path("heldout"), &corpus.heldout, &corpus.vocab, &digest)?;

    println!(
        "wrote dataset ({} train / {} val / {} test) and corpus ({} train / {} heldout) under {}",
        dataset.train.len(),
        dataset.validation.len(),
        dataset.test.len(),
        corpus.train.len(),
        corpus.heldout.len(),
        config.data_dir().display()
    );
    Ok(())
}

fn load_split(config: &RunConfig, split: &str) -> Result<Vec<Sample>> {
    let path = config.split_path(split);
    require(&path, "gen-data")?;
    Ok(read_split_csv(&path)?)
}

fn load_corpus(config: &RunConfig) -> Result<SentimentCorpus> {
    if config.corpus.template_set != "v1" {
        return Err(Error::Config(format!(
            "unknown template set {:?}",
            config.corpus.template_set
        ))
        .into());
    }
    let vocab = Vocab::v1();
    let train_path = config.corpus_path("train");
    let heldout_path = config.corpus_path("heldout");
    require(&train_path, "gen-data")?;
    require(&heldout_path, "gen-data")?;
    Ok(SentimentCorpus {
        train: read_corpus(&train_path, &vocab)?,
        heldout: read_corpus(&heldout_path, &vocab)?,
        vocab,
        config: config.corpus_config(),
    })
}

pub fn cmd_train(config: &RunConfig, which: &str) -> Result<()> {
    config.write_resolved()?;
    fs::create_dir_all(config.models_dir())?;
    let digest = config.digest();

    if which == "mlp" || which == "all" {
        let train = load_split(config, "train")?;
        let examples: Vec<(Vector, usize)> = train
            .iter()
            .map(|s| (s.features.clone(), s.class))
            .collect();
        let seed = config.root_rng().substream("mlp").seed();
        let mcfg = MlpTrainConfig {
            hidden: config.mlp.hidden.clone(),
            epochs: config.mlp.epochs,
            batch_size: config.mlp.batch_size,
            learning_rate: config.mlp.learning_rate,
            seed,
        };
        let model = train_mlp(&examples, &mcfg)?;
        let ckpt = Checkpoint::of_mlp(
            &model,
            Provenance::new(seed, &digest, model.final_train_accuracy()),
            serde_json::Value::Null,
        );
        ckpt.save(&config.mlp_ckpt())?;
        println!(
            "trained mlp (train accuracy {:.4}) -> {}",
            model.final_train_accuracy().unwrap_or(f64::NAN),
            config.mlp_ckpt().display()
        );
    }

    if which == "transformer" || which == "all" {
        let corpus = load_corpus(config)?;
        let sequences = corpus.copy_sequences(&corpus.train);
        let tcfg = TransformerConfig {
            vocab_size: corpus.vocab.len(),
            model_dim: config.transformer.model_dim,
            layers: config.transformer.layers,
            heads: config.transformer.heads,
            context_len: config.transformer.context_len,
        };
        let seed = config.root_rng().substream("transformer").seed();
        let ttrain = TransformerTrainConfig {
            steps: config.transformer.steps,
            batch_size: config.transformer.batch_size,
            learning_rate: config.transformer.learning_rate,
            seed,
        };
        let model = train_tiny_transformer(&tcfg, &sequences, &ttrain)?;
        let ckpt = Checkpoint::of_transformer(
            &model,
            Provenance::new(seed, &digest, model.final_train_loss()),
            serde_json::json!({ "vocab": corpus.vocab.to_spec() }),
        );
        ckpt.save(&config.transformer_ckpt())?;
        println!(
            "trained transformer ({} steps, final batch loss {:.4}) -> {}",
            ttrain.steps,
            model.final_train_loss().unwrap_or(f64::NAN),
            config.transformer_ckpt().display()
        );
    }
    Ok(())
}

fn load_mlp(config: &RunConfig) -> Result<(MlpClassifier, String)> {
    let path = config.mlp_ckpt();
    require(&path, "train")?;
    let ckpt = Checkpoint::load(&path)?;
    Ok((ckpt.to_mlp()?, ckpt.model_digest()))
}

fn load_transformer(config: &RunConfig) -> Result<(TinyTransformer, Vocab, String)> {
    let path = config.transformer_ckpt();
    require(&path, "train")?;
    let ckpt = Checkpoint::load(&path)?;
    let spec: VocabSpec = serde_json::from_value(
        ckpt.metadata
            .get("vocab")
            .cloned()
            .ok_or_else(|| Error::Format("transformer checkpoint lacks vocab metadata".into()))?,
    )
    .map_err(|e| Error::Format(format!("bad vocab metadata: {e}")))?;
    Ok((ckpt.to_transformer()?, Vocab::from_spec(&spec)?, ckpt.model_digest()))
}

fn domain_label(d: usize) -> String {
    format!("domain{d}")
}

pub fn cmd_extract_context(config: &RunConfig) -> Result<()> {
    config.write_resolved()?;
    fs::create_dir_all(config.contexts_dir())?;
    let layer = config.context.classifier_layer;

    // Classifier contexts: source mean over the training split, one removal
    // context per domain from the disjoint validation split.
    let (model, model_digest) = load_mlp(config)?;
    let train = load_split(config, "train")?;
    let val = load_split(config, "val")?;
    let mut cache = ContextCache::new(&model_digest);
    let train_feats: Vec<Vector> = train.iter().map(|s| s.features.clone()).collect();
    cache.put(extract_mean_context(&model, &train_feats, layer, "source")?);
    for d in 0..config.dataset.domains {
        let mut feats: Vec<Vector> = val
            .iter()
            .filter(|s| s.domain == d)
            .map(|s| s.features.clone())
            .collect();
        if config.context.removal_samples > 0 {
            feats.truncate(config.context.removal_samples);
        }
        cache.put(extract_mean_context(&model, &feats, layer, domain_label(d))?);
    }
    cache.save(&config.classifier_cache_path())?;
    println!(
        "cached {} classifier contexts -> {}",
        cache.len(),
        config.classifier_cache_path().display()
    );

    // Transformer phrase contexts at every configured tap.
    let (lm, vocab, lm_digest) = load_transformer(config)?;
    let positive = vocab.encode(&config.context.positive_phrase)?;
    let negative = vocab.encode(&config.context.negative_phrase)?;
    let mut phrases = ContextCache::new(&lm_digest);
    for &l in &config.context.phrase_layers {
        phrases.put(extract_phrase_context(&lm, &positive, l, "positive")?);
        phrases.put(extract_phrase_context(&lm, &negative, l, "negative")?);
    }
    phrases.save(&config.phrase_cache_path())?;
    println!(
        "cached {} phrase contexts -> {}",
        phrases.len(),
        config.phrase_cache_path().display()
    );
    Ok(())
}

/// Steering summary recorded in eval reports; `none` for inert steering so
/// equivalent configs produce identical documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum SteeringDoc {
    None,
    Fixed {
        layer: usize,
        terms: Vec<(String, f64)>,
    },
    DomainAdaptive {
        layer: usize,
        inject_strength: f64,
        removal_strength: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvalDocument {
    config_digest: String,
    model_digest: String,
    steering: SteeringDoc,
    baseline: EvalReport,
    steered: Option<EvalReport>,
}

pub fn cmd_eval(config: &RunConfig) -> Result<()> {
    config.write_resolved()?;
    fs::create_dir_all(config.reports_dir())?;
    let (model, model_digest) = load_mlp(config)?;
    let test = load_split(config, "test")?;

    let baseline = mean_domain_accuracy(&model, &test, |_| None)?;
    let (steering_doc, steered) = match config.steering.mode {
        SteeringMode::None => (SteeringDoc::None, None),
        SteeringMode::Fixed => {
            let cache_path = config.classifier_cache_path();
            require_cache(&cache_path)?;
            let cache = ContextCache::load(&cache_path)?;
            let spec = SteeringSpec::new(
                config.steering.layer,
                config
                    .steering
                    .terms
                    .iter()
                    .map(|t| (t.label.clone(), t.strength))
                    .collect(),
            )?;
            let resolved = resolve(&spec, &cache)?;
            let report = mean_domain_accuracy(&model, &test, |_| Some(resolved.clone()))?
                .with_baseline(&baseline, "unsteered")?;
            (
                SteeringDoc::Fixed {
                    layer: config.steering.layer,
                    terms: config
                        .steering
                        .terms
                        .iter()
                        .map(|t| (t.label.clone(), t.strength))
                        .collect(),
                },
                Some(report),
            )
        }
        SteeringMode::DomainAdaptive => {
            let cache_path = config.classifier_cache_path();
            require_cache(&cache_path)?;
            let cache = ContextCache::load(&cache_path)?;
            let layer = config.context.classifier_layer;
            let (inject, removal) = (
                config.steering.inject_strength,
                config.steering.removal_strength,
            );
            // Resolve every domain's steering up front so cache misses
            // surface before evaluation.
            let mut per_domain: Vec<ResolvedSteering> = Vec::new();
            for d in 0..config.dataset.domains {
                let spec = contxt_core::engine::make_classifier_spec(
                    "source",
                    domain_label(d),
                    inject,
                    removal,
                    layer,
                )?;
                per_domain.push(resolve(&spec, &cache)?);
            }
            let report = mean_domain_accuracy(&model, &test, |d| Some(per_domain[d].clone()))?
                .with_baseline(&baseline, "unsteered")?;
            (
                SteeringDoc::DomainAdaptive {
                    layer,
                    inject_strength: inject,
                    removal_strength: removal,
                },
                Some(report),
            )
        }
    };

    let doc = EvalDocument {
        config_digest: config.digest(),
        model_digest,
        steering: steering_doc,
        baseline,
        steered,
    };
    let path = config.reports_dir().join("eval.json");
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(&path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_sweep(config: &RunConfig) -> Result<()> {
    config.write_resolved()?;
    fs::create_dir_all(config.sweeps_dir())?;
    let digest = config.digest();

    // Grid sweep: strengths selected on validation, test touched once at
    // reporting via the per-domain delta document.
    let (model, _) = load_mlp(config)?;
    let val = load_split(config, "val")?;
    let test = load_split(config, "test")?;
    let cache_path = config.classifier_cache_path();
    require_cache(&cache_path)?;
    let cache = ContextCache::load(&cache_path)?;
    let grid_config = GridSweepConfig {
        inject_strengths: config.sweep.grid.inject.clone(),
        removal_strengths: config.sweep.grid.removal.clone(),
        layer: config.context.classifier_layer,
        source_label: "source".into(),
        domain_labels: (0..config.dataset.domains).map(domain_label).collect(),
        metric: "mean_accuracy".into(),
        parallelism: config.sweep.grid.parallelism,
        seed: config.seed,
    };
    let sweep = run_grid_sweep(&model, &val, &cache, &grid_config)?;
    emit_grid_csv(&sweep, &config.sweeps_dir().join("grid.csv"))?;
    let delta = domain_delta_at_optimum(&sweep, &model, &test, &cache, &grid_config)?;
    let mut delta_text = serde_json::to_string_pretty(&delta)?;
    delta_text.push('\n');
    fs::write(config.sweeps_dir().join("domain_delta.json"), delta_text)?;
    write_manifest(
        &RunManifest {
            config_digest: digest.clone(),
            model_digest: sweep.model_digest.clone(),
            context_digest: Some(sweep.context_digest.clone()),
            seed: config.seed,
            rng_algorithm: RNG_ALGORITHM.into(),
            timestamp: Some(now_secs()),
            config: serde_json::to_value(&grid_config)?,
        },
        &config.sweeps_dir().join("grid_manifest.json"),
    )?;
    let (removal, inject) = sweep.argmax_strengths();
    println!(
        "grid sweep: argmax removal {removal}, inject {inject}, delta {:+.4}; test mean delta {:+.4}",
        sweep.deltas[sweep.argmax.0][sweep.argmax.1],
        delta.mean_delta.unwrap_or(f64::NAN),
    );

    // Generation sweep over the held-out prompts.
    let (lm, vocab, lm_digest) = load_transformer(config)?;
    let corpus = load_corpus(config)?;
    let prompts: Vec<Sentence> = corpus
        .heldout
        .iter()
        .take(config.sweep.generation.prompts)
        .cloned()
        .collect();
    let gen_config = GenSweepConfig {
        layers: config.sweep.generation.layers.clone(),
        magnitudes: config.sweep.generation.magnitudes.clone(),
        positive_phrase: vocab.encode(&config.context.positive_phrase)?,
        negative_phrase: vocab.encode(&config.context.negative_phrase)?,
        remove_own: config.sweep.generation.remove_own,
        max_tokens: config.sweep.generation.max_tokens,
        seed: config.seed,
    };
    let cells = run_generation_sweep(&lm, &corpus, &prompts, &gen_config)?;
    emit_generation_csv(&cells, &digest, &config.sweeps_dir().join("generation.csv"))?;
    write_manifest(
        &RunManifest {
            config_digest: digest,
            model_digest: lm_digest,
            context_digest: None,
            seed: config.seed,
            rng_algorithm: RNG_ALGORITHM.into(),
            timestamp: Some(now_secs()),
            config: serde_json::to_value(&gen_config)?,
        },
        &config.sweeps_dir().join("generation_manifest.json"),
    )?;
    let best = cells
        .iter()
        .filter(|c| c.magnitude > 0.0)
        .max_by(|a, b| a.report.flip_rate.total_cmp(&b.report.flip_rate));
    if let Some(cell) = best {
        println!(
            "generation sweep: best flip {:.3} at layer {} magnitude {} (self-bleu {:.3})",
            cell.report.flip_rate, cell.layer, cell.magnitude, cell.report.mean_self_bleu
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordDoc {
    prompt_text: String,
    output_text: String,
    prompt: Vec<u32>,
    output: Vec<u32>,
    label_before: contxt_core::synth::OracleLabel,
    label_after: contxt_core::synth::OracleLabel,
    self_bleu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GenerationDocument {
    config_digest: String,
    model_digest: String,
    layer: usize,
    magnitude: f64,
    remove_own: bool,
    flip_rate: f64,
    determined: usize,
    undetermined: usize,
    mean_self_bleu: f64,
    records: Vec<RecordDoc>,
}

pub fn cmd_generate(config: &RunConfig) -> Result<()> {
    config.write_resolved()?;
    fs::create_dir_all(config.generations_dir())?;
    let (lm, vocab, lm_digest) = load_transformer(config)?;
    let corpus = load_corpus(config)?;
    let layer = config.steering.gen_layer;
    let magnitude = config.steering.gen_magnitude;

    let positive = extract_phrase_context(
        &lm,
        &vocab.encode(&config.context.positive_phrase)?,
        layer,
        "positive",
    )?;
    let negative = extract_phrase_context(
        &lm,
        &vocab.encode(&config.context.negative_phrase)?,
        layer,
        "negative",
    )?;

    let prompts: Vec<Sentence> = corpus
        .heldout
        .iter()
        .take(config.sweep.generation.prompts)
        .cloned()
        .collect();
    let mut records = Vec::with_capacity(prompts.len());
    for sentence in &prompts {
        use contxt_core::synth::{oracle_label, OracleLabel};
        let (inject, remove) = match oracle_label(&sentence.tokens, &vocab) {
            OracleLabel::Negative => (&positive, &negative),
            _ => (&negative, &positive),
        };
        let mut terms = vec![(magnitude, inject.vector.clone())];
        if config.steering.gen_remove_own {
            terms.push((-magnitude, remove.vector.clone()));
        }
        let steer = ResolvedSteering { layer, terms };
        records.push(rewrite_record(
            &lm,
            &corpus,
            sentence,
            Some(&steer),
            config.sweep.generation.max_tokens,
        )?);
    }
    let report = contxt_core::metrics::GenerationEvalReport::from_records(records);
    let doc = GenerationDocument {
        config_digest: config.digest(),
        model_digest: lm_digest,
        layer,
        magnitude,
        remove_own: config.steering.gen_remove_own,
        flip_rate: report.flip_rate,
        determined: report.determined,
        undetermined: report.undetermined,
        mean_self_bleu: report.mean_self_bleu,
        records: report
            .records
            .iter()
            .map(|r| RecordDoc {
                prompt_text: vocab.decode(&r.prompt),
                output_text: vocab.decode(&r.output),
                prompt: r.prompt.clone(),
                output: r.output.clone(),
                label_before: r.label_before,
                label_after: r.label_after,
                self_bleu: r.self_bleu,
            })
            .collect(),
    };
    let path = config.generations_dir().join("records.json");
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(&path, text)?;
    println!(
        "wrote {} ({} records, flip rate {:.3}, mean self-bleu {:.3})",
        path.display(),
        doc.records.len(),
        doc.flip_rate,
        doc.mean_self_bleu
    );
    Ok(())
}
