//! Prints fixture diagnostics: classifier sweep regimes and the generation
//! steering band. Slow; run with --release.

use contxt_core::engine::{extract_mean_context, mean_feature_context, ContextCache};
use contxt_core::metrics::{mean_domain_accuracy, unigram_cross_entropy};
use contxt_core::nn::{
    mlp_digest, train_mlp, train_tiny_transformer, MlpTrainConfig, TransformerConfig,
    TransformerTrainConfig,
};
use contxt_core::sweep::{
    domain_delta_at_optimum, run_generation_sweep, run_grid_sweep, GenSweepConfig, GridSweepConfig,
};
use contxt_core::synth::{
    gen_domain_shift, gen_sentiment_corpus, CorpusConfig, DomainShiftConfig, Split,
};
use contxt_core::tensor::cosine;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2500);
    let skip_lm = args.iter().any(|a| a == "--skip-lm");

    classifier_part();
    if !skip_lm {
        lm_part(steps);
    }
}

fn classifier_part() {
    let t0 = std::time::Instant::now();
    let dcfg = DomainShiftConfig::default();
    let ds = gen_domain_shift(&dcfg).unwrap();

    // Context recovery cosine (criterion-2 style).
    for (a, b) in [(0usize, 1usize), (1, 2), (2, 3), (0, 3)] {
        let ma = mean_feature_context(&ds.domain_features(Split::Validation, a), "a").unwrap();
        let mb = mean_feature_context(&ds.domain_features(Split::Validation, b), "b").unwrap();
        let diff = ma.vector.sub(&mb.vector).unwrap();
        let planted = ds.planted_shift_between(a, b).unwrap();
        let cos = cosine(&diff, &planted).unwrap();
        println!("ctx-recovery cosine d{a}-d{b}: {cos:.5}");
    }

    let mcfg = MlpTrainConfig {
        hidden: vec![32, 32, 32],
        epochs: 60,
        batch_size: 32,
        learning_rate: 0.05,
        seed: 0,
    };
    let model = train_mlp(&ds.train_examples(), &mcfg).unwrap();
    println!("train acc: {:?} ({:.1?})", model.final_train_accuracy(), t0.elapsed());

    let baseline_val = mean_domain_accuracy(&model, &ds.validation, |_| None).unwrap();
    let baseline_test = mean_domain_accuracy(&model, &ds.test, |_| None).unwrap();
    println!(
        "baseline val per-domain: {:?} mean {:.4}",
        baseline_val.domains.iter().map(|d| (d.domain, d.accuracy)).collect::<Vec<_>>(),
        baseline_val.mean_accuracy
    );
    println!(
        "baseline test per-domain: {:?} mean {:.4}",
        baseline_test.domains.iter().map(|d| (d.domain, d.accuracy)).collect::<Vec<_>>(),
        baseline_test.mean_accuracy
    );

    // Contexts: source from train split, per-domain from validation.
    let mut cache = ContextCache::new(mlp_digest(&model));
    let train_feats: Vec<_> = ds.train.iter().map(|s| s.features.clone()).collect();
    cache.put(extract_mean_context(&model, &train_feats, 1, "source").unwrap());
    for d in 0..dcfg.domains {
        let feats = ds.domain_features(Split::Validation, d);
        cache.put(extract_mean_context(&model, &feats, 1, format!("domain{d}")).unwrap());
    }

    let gcfg = GridSweepConfig {
        inject_strengths: (0..=10).map(|i| i as f64 / 10.0).collect(),
        removal_strengths: (0..=10).map(|i| i as f64 / 10.0).collect(),
        layer: 1,
        source_label: "source".into(),
        domain_labels: (0..dcfg.domains).map(|d| format!("domain{d}")).collect(),
        metric: "mean_accuracy".into(),
        parallelism: 4,
        seed: 0,
    };
    let t1 = std::time::Instant::now();
    let sweep = run_grid_sweep(&model, &ds.validation, &cache, &gcfg).unwrap();
    println!("sweep took {:.1?}", t1.elapsed());
    println!("baseline cell value: {:.4}", sweep.baseline);
    println!("argmax: idx {:?} strengths {:?}", sweep.argmax, sweep.argmax_strengths());
    println!("delta at argmax: {:.4}", sweep.deltas[sweep.argmax.0][sweep.argmax.1]);

    // Removal-only column (inject = 0) and inject-only row (removal = 0).
    let zero_i = gcfg.inject_strengths.iter().position(|&x| x == 0.0).unwrap();
    let zero_r = gcfg.removal_strengths.iter().position(|&x| x == 0.0).unwrap();
    let removal_only: Vec<f64> = (0..gcfg.removal_strengths.len())
        .map(|r| sweep.deltas[r][zero_i])
        .collect();
    let inject_only: Vec<f64> = (0..gcfg.inject_strengths.len())
        .map(|i| sweep.deltas[zero_r][i])
        .collect();
    println!("removal-only deltas: {removal_only:.4?}");
    println!("inject-only deltas: {inject_only:.4?}");
    let best_single = removal_only
        .iter()
        .chain(inject_only.iter())
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "best single-axis: {best_single:.4}, argmax beats it by {:.4}",
        sweep.deltas[sweep.argmax.0][sweep.argmax.1] - best_single
    );

    let report = domain_delta_at_optimum(&sweep, &model, &ds.test, &cache, &gcfg).unwrap();
    println!(
        "test at argmax: per-domain deltas {:?}, mean delta {:.4}, source delta {:.4}",
        report.domains.iter().map(|d| (d.domain, d.delta.unwrap())).collect::<Vec<_>>(),
        report.mean_delta.unwrap(),
        report.domains[0].delta.unwrap()
    );
    println!("classifier part total {:.1?}", t0.elapsed());
}

fn lm_part(steps: usize) {
    let t0 = std::time::Instant::now();
    let corpus = gen_sentiment_corpus(&CorpusConfig {
        size: 500,
        template_set: "v1".into(),
        seed: 0,
    })
    .unwrap();
    println!(
        "corpus: {} train / {} heldout, vocab {}, max seq {}",
        corpus.train.len(),
        corpus.heldout.len(),
        corpus.vocab.len(),
        corpus.max_sequence_len()
    );

    let tcfg = TransformerConfig {
        vocab_size: corpus.vocab.len(),
        model_dim: 64,
        layers: 4,
        heads: 2,
        context_len: 64,
    };
    let train_seqs = corpus.copy_sequences(&corpus.train);
    let heldout_seqs = corpus.copy_sequences(&corpus.heldout);
    let ttrain = TransformerTrainConfig {
        steps,
        batch_size: 8,
        learning_rate: 3e-3,
        seed: 0,
    };
    let model = train_tiny_transformer(&tcfg, &train_seqs, &ttrain).unwrap();
    println!(
        "trained {} steps in {:.1?}, final batch loss {:?}",
        ttrain.steps,
        t0.elapsed(),
        model.final_train_loss()
    );

    let refs: Vec<&[u32]> = heldout_seqs.iter().map(|s| s.as_slice()).collect();
    let model_ce = model.loss(&refs).unwrap();
    let uni_ce = unigram_cross_entropy(&train_seqs, &heldout_seqs, corpus.vocab.len());
    println!(
        "heldout CE: model {model_ce:.4} (ppl {:.2}) vs unigram {uni_ce:.4} (ppl {:.2})",
        model_ce.exp(),
        uni_ce.exp()
    );

    let prompts: Vec<_> = corpus.heldout.iter().take(50).cloned().collect();
    let phrase_sets = [
        ("lexeme3", "wonderful amazing perfect", "terrible awful horrible"),
        ("lexeme1", "wonderful", "terrible"),
    ];
    for (name, pos, neg) in phrase_sets {
        protocol_sweep(&model, &corpus, &prompts, pos, neg, true, name);
    }
    println!("lm part total {:.1?}", t0.elapsed());
}

fn protocol_sweep(
    model: &contxt_core::nn::TinyTransformer,
    corpus: &contxt_core::synth::SentimentCorpus,
    prompts: &[contxt_core::synth::Sentence],
    pos: &str,
    neg: &str,
    remove_own: bool,
    name: &str,
) {
    use contxt_core::engine::{extract_phrase_context, ResolvedSteering};
    use contxt_core::metrics::GenerationEvalReport;
    use contxt_core::sweep::rewrite_record;
    use contxt_core::synth::{oracle_label, OracleLabel};

    let pos_phrase = corpus.vocab.encode(pos).unwrap();
    let neg_phrase = corpus.vocab.encode(neg).unwrap();
    println!("== protocol {name} remove_own={remove_own}");
    println!("layer magnitude flip_rate mean_bleu determined undetermined");
    for layer in [1usize, 2, 3, 4] {
        let cpos = extract_phrase_context(model, &pos_phrase, layer, "p").unwrap();
        let cneg = extract_phrase_context(model, &neg_phrase, layer, "n").unwrap();
        for magnitude in [0.0, 0.5, 0.6, 0.7, 0.75, 0.8, 0.85, 0.9, 1.0, 1.25, 1.5] {
            let mut records = Vec::new();
            for sentence in prompts {
                let own_is_neg =
                    oracle_label(&sentence.tokens, &corpus.vocab) == OracleLabel::Negative;
                let (inject, remove) = if own_is_neg {
                    (&cpos, &cneg)
                } else {
                    (&cneg, &cpos)
                };
                let mut terms = vec![(magnitude, inject.vector.clone())];
                if remove_own {
                    terms.push((-magnitude, remove.vector.clone()));
                }
                let steer = ResolvedSteering { layer, terms };
                records
                    .push(rewrite_record(model, corpus, sentence, Some(&steer), 16).unwrap());
            }
            let report = GenerationEvalReport::from_records(records);
            println!(
                "{:>5} {:>9.2} {:>9.3} {:>9.3} {:>10} {:>12}",
                layer,
                magnitude,
                report.flip_rate,
                report.mean_self_bleu,
                report.determined,
                report.undetermined
            );
        }
    }
}
