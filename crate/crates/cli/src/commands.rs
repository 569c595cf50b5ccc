//! Subcommand implementations. Each command resolves its configuration and
//! checks its inputs before creating any output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use mpe_autograd::Schedule;
use mpe_core::corpus::{corpus_stats, read_corpus, save_records};
use mpe_core::diagnostics::{
    label_split, property_stats, subset_report, DiagnosticLabels, FrequencyUnit, LongArticleThreshold,
};
use mpe_core::metrics::{build_report, load_predictions, MetricReport};
use mpe_core::splitter::{
    audit_corpora, controlled_split, load_assignment, merge_single_to_mpe, save_assignment, SinglePropertyRecord,
    SplitCorpora,
};
use mpe_core::synthetic::generate_synthetic;
use mpe_core::tokenizer::{serialize_pairs, train_subword, Vocabulary};
use mpe_core::{MpeRecord, NormalizationPolicy, PropertyValuePair};
use mpe_hpo::{run_study, ParamSpec, Params, Sampler, SearchSpace, Trial};
use mpe_models::{
    evaluate, load_model, prepare_examples, save_model, train, Activation, Architecture, Control, Model, ModelConfig,
    Positional, Strategy, TrainConfig, TrainOutcome,
};
use serde::Serialize;

use crate::args::*;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{FileDigest, RunManifest};

/// Runs one parsed command line and returns the manifest it wrote.
pub fn run(cli: Cli, args: Vec<String>) -> Result<RunManifest> {
    let started = Instant::now();
    let mut config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.common.seed.unwrap_or(config.seed);
    config.apply_seed(seed);
    let mut inputs = apply_flags(&cli.command, &mut config)?;
    config.validate()?;

    let out_dir = &cli.common.out_dir;
    let outputs: Vec<PathBuf> = output_names(&cli.command)
        .into_iter()
        .map(|name| out_dir.join(name))
        .collect();
    inputs.extend(cli.common.config.iter().cloned());
    check_paths(&inputs, &outputs)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;

    let policy = NormalizationPolicy::default();
    let written = match &cli.command {
        Command::Gen(_) => gen(&config, seed, out_dir)?,
        Command::Merge(a) => merge(a, &policy, out_dir)?,
        Command::Split(a) => split(a, &config, &policy, out_dir)?,
        Command::Audit(a) => audit(a, &policy, out_dir)?,
        Command::Diagnose(a) => diagnose(a, &config, &policy, out_dir)?,
        Command::Tokenize(a) => tokenize(a, &config, &policy, out_dir)?,
        Command::Train(a) => train_command(a, &config, &policy, out_dir)?,
        Command::Evaluate(a) => evaluate_command(a, &config, &policy, out_dir)?,
        Command::Hpo(a) => hpo(a, &config, &policy, out_dir)?,
    };

    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        args,
        config: serde_json::to_value(&config).expect("configs serialize"),
        inputs: inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: written.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    manifest.save(&out_dir.join(format!("{}.manifest.json", cli.command.name())))?;
    Ok(manifest)
}

fn output_names(command: &Command) -> Vec<&'static str> {
    match command {
        Command::Gen(_) => vec!["corpus.jsonl", "inventory.json"],
        Command::Merge(_) => vec!["corpus.jsonl"],
        Command::Split(_) => vec![
            "train.jsonl",
            "validation.jsonl",
            "test.jsonl",
            "assignment.jsonl",
            "assignment_properties.json",
            "audit.json",
        ],
        Command::Audit(_) => vec!["audit.json"],
        Command::Diagnose(_) => vec!["labels.jsonl", "subset_report.json"],
        Command::Tokenize(_) => vec!["vocab.txt"],
        Command::Train(_) => vec!["model.ckpt", "curve.tsv", "train_summary.json"],
        Command::Evaluate(_) => vec!["predictions.jsonl", "report.json"],
        Command::Hpo(_) => vec!["study.jsonl", "best.json"],
    }
}

/// Applies flags to `config` and returns the input files the command reads.
fn apply_flags(command: &Command, config: &mut RunConfig) -> Result<Vec<PathBuf>> {
    let inputs = match command {
        Command::Gen(a) => {
            let g = &mut config.generator;
            set(&mut g.articles, a.articles);
            set(&mut g.properties, a.properties);
            if a.name_pool.is_some() {
                g.name_pool = a.name_pool;
            }
            vec![]
        }
        Command::Merge(a) => vec![a.input.clone()],
        Command::Split(a) => {
            let s = &mut config.split;
            set(&mut s.test_only_property_fraction, a.test_only_fraction);
            set(&mut s.val_only_property_fraction, a.val_only_fraction);
            set(&mut s.shared_valtest_property_fraction, a.shared_fraction);
            set(&mut s.seen_articles_per_eval_split, a.seen_articles);
            set(&mut s.max_eval_split_articles, a.max_eval_articles);
            vec![a.corpus.clone()]
        }
        Command::Audit(a) => {
            let mut v = vec![a.train.clone(), a.validation.clone(), a.test.clone()];
            v.extend(a.assignment.iter().cloned());
            v.extend(a.assignment_properties.iter().cloned());
            v
        }
        Command::Diagnose(a) => {
            apply_thresholds(&a.thresholds, config);
            vec![a.train.clone(), a.eval.clone()]
        }
        Command::Tokenize(a) => {
            set(&mut config.tokenizer.vocab_size, a.vocab_size);
            vec![a.train.clone()]
        }
        Command::Train(a) => {
            apply_model_flags(&a.model, config)?;
            vec![a.train.clone(), a.validation.clone(), a.vocab.clone()]
        }
        Command::Evaluate(a) => {
            apply_thresholds(&a.thresholds, config);
            if a.beam == Some(0) {
                return Err(CliError::Usage("--beam must be at least 1".into()));
            }
            set(&mut config.train.beam_size, a.beam);
            let mut v = vec![a.eval.clone()];
            v.extend(
                [&a.checkpoint, &a.vocab, &a.predictions, &a.labels, &a.train]
                    .into_iter()
                    .flatten()
                    .cloned(),
            );
            v
        }
        Command::Hpo(a) => {
            set(&mut config.study.n_trials, a.n_trials);
            if let Some(s) = a.sampler {
                config.study.sampler = match s {
                    SamplerArg::Tpe => Sampler::Tpe,
                    SamplerArg::Random => Sampler::Random,
                };
            }
            set_steps(&mut config.train, a.trial_steps);
            let mut v: Vec<PathBuf> = [&a.train, &a.validation, &a.vocab]
                .into_iter()
                .flatten()
                .cloned()
                .collect();
            if !matches!(a.space.as_str(), "desk" | "paper") {
                v.push(PathBuf::from(&a.space));
            }
            v
        }
    };
    Ok(inputs)
}

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

/// Also stretches a linear-decay schedule to the new step budget.
fn set_steps(train: &mut TrainConfig, steps: Option<u64>) {
    if let Some(steps) = steps {
        train.max_steps = steps;
        if let Schedule::LinearDecay { total, .. } = &mut train.optimizer.schedule {
            *total = steps;
        }
    }
}

fn apply_thresholds(a: &ThresholdArgs, config: &mut RunConfig) {
    let d = &mut config.diagnostics;
    set(&mut d.thresholds.rare_max, a.rare_threshold);
    set(&mut d.thresholds.entropy_threshold, a.entropy_threshold);
    if let Some(w) = a.long_words {
        d.thresholds.long_article = LongArticleThreshold::Words(w);
    }
    if let Some(p) = a.long_percentile {
        d.thresholds.long_article = LongArticleThreshold::Percentile(p);
    }
    if let Some(u) = a.frequency_unit {
        d.frequency_unit = match u {
            Unit::Pairs => FrequencyUnit::Pairs,
            Unit::Articles => FrequencyUnit::Articles,
        };
    }
}

fn apply_model_flags(a: &ModelArgs, config: &mut RunConfig) -> Result<()> {
    if let Some(arch) = &a.architecture {
        config.model.architecture = arch
            .parse::<Architecture>()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    set(&mut config.model.max_source_len, a.max_source_len);
    set_steps(&mut config.train, a.max_steps);
    set(&mut config.train.batch_size, a.batch_size);
    set(&mut config.train.optimizer.lr, a.lr);
    set(&mut config.train.patience, a.patience);
    set(&mut config.train.validate_every, a.validate_every);
    Ok(())
}

/// Inputs must exist, and no output may overwrite an input.
fn check_paths(inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
    let mut protected = Vec::new();
    for input in inputs {
        let canonical = input
            .canonicalize()
            .map_err(|e| CliError::Usage(format!("cannot read input {}: {e}", input.display())))?;
        if !canonical.is_file() {
            return Err(CliError::Usage(format!("input {} is not a file", input.display())));
        }
        protected.push(canonical);
    }
    for output in outputs {
        if let Ok(canonical) = output.canonicalize() {
            if protected.contains(&canonical) {
                return Err(CliError::Usage(format!(
                    "output {} would overwrite an input; choose another --out-dir",
                    output.display()
                )));
            }
        }
    }
    Ok(())
}

fn read(path: &Path, policy: &NormalizationPolicy) -> Result<Vec<MpeRecord>> {
    Ok(read_corpus(path, *policy)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<PathBuf> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn write_records(path: &Path, records: &[MpeRecord]) -> Result<PathBuf> {
    save_records(path, records)?;
    Ok(path.to_path_buf())
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    article_id: &'a str,
    pairs: &'a [PropertyValuePair],
}

pub fn save_predictions(path: &Path, predictions: &BTreeMap<String, Vec<PropertyValuePair>>) -> Result<PathBuf> {
    let io = |e: std::io::Error| CliError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for (article_id, pairs) in predictions {
        serde_json::to_writer(&mut w, &PredictionLine { article_id, pairs }).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(path.to_path_buf())
}

fn gen(config: &RunConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let corpus = generate_synthetic(&config.generator, seed)?;
    let stats = corpus_stats(&corpus.records)?;
    println!(
        "generated {} articles, {} pairs, {} properties",
        stats.article_count,
        stats.total_pairs(),
        stats.property_frequency.len()
    );
    Ok(vec![
        write_records(&out.join("corpus.jsonl"), &corpus.records)?,
        write_json(&out.join("inventory.json"), &corpus.inventory)?,
    ])
}

fn merge(a: &MergeArgs, policy: &NormalizationPolicy, out: &Path) -> Result<Vec<PathBuf>> {
    let singles = read(&a.input, policy)?
        .into_iter()
        .map(SinglePropertyRecord::from_record)
        .collect::<mpe_core::Result<Vec<_>>>()?;
    let n = singles.len();
    let merged = merge_single_to_mpe(singles, policy)?;
    println!("merged {n} single-property records into {} articles", merged.len());
    Ok(vec![write_records(&out.join("corpus.jsonl"), &merged)?])
}

fn split(a: &SplitArgs, config: &RunConfig, policy: &NormalizationPolicy, out: &Path) -> Result<Vec<PathBuf>> {
    let corpus = read(&a.corpus, policy)?;
    let assignment = controlled_split(&corpus, &config.split)?;
    let corpora = assignment.apply(&corpus)?;
    let report = audit_corpora(&corpora, Some(&assignment));
    print!("{}", report.to_table());
    let assignment_path = out.join("assignment.jsonl");
    let sidecar = out.join("assignment_properties.json");
    save_assignment(&assignment, &assignment_path, &sidecar)?;
    Ok(vec![
        write_records(&out.join("train.jsonl"), &corpora.train)?,
        write_records(&out.join("validation.jsonl"), &corpora.validation)?,
        write_records(&out.join("test.jsonl"), &corpora.test)?,
        assignment_path,
        sidecar,
        write_json(&out.join("audit.json"), &report)?,
    ])
}

fn audit(a: &AuditArgs, policy: &NormalizationPolicy, out: &Path) -> Result<Vec<PathBuf>> {
    let corpora = SplitCorpora {
        train: read(&a.train, policy)?,
        validation: read(&a.validation, policy)?,
        test: read(&a.test, policy)?,
    };
    let assignment = match &a.assignment {
        Some(path) => Some(load_assignment(path, a.assignment_properties.as_deref())?),
        None => None,
    };
    let report = audit_corpora(&corpora, assignment.as_ref());
    print!("{}", report.to_table());
    Ok(vec![write_json(&out.join("audit.json"), &report)?])
}

/// Labels `split` against statistics of `train`.
pub fn compute_labels(
    train: &[MpeRecord],
    split: &[MpeRecord],
    config: &RunConfig,
    policy: &NormalizationPolicy,
) -> Result<DiagnosticLabels> {
    let d = &config.diagnostics;
    let stats = property_stats(train, d.frequency_unit);
    let lengths = corpus_stats(train)?.article_word_lengths;
    let long_words = d.thresholds.long_words(&lengths)?;
    Ok(label_split(split, &stats, &d.thresholds, long_words, policy)?)
}

fn diagnose(a: &DiagnoseArgs, config: &RunConfig, policy: &NormalizationPolicy, out: &Path) -> Result<Vec<PathBuf>> {
    let train_records = read(&a.train, policy)?;
    let eval = read(&a.eval, policy)?;
    let labels = compute_labels(&train_records, &eval, config, policy)?;
    let report = subset_report(&eval, &labels)?;
    print!("{}", report.to_table());
    let labels_path = out.join("labels.jsonl");
    labels.save(&labels_path)?;
    Ok(vec![labels_path, write_json(&out.join("subset_report.json"), &report)?])
}

/// Article texts and serialized targets: everything the models read or emit.
pub fn tokenizer_texts(records: &[MpeRecord], train: &TrainConfig) -> Result<Vec<String>> {
    let mut texts = Vec::with_capacity(records.len() * 2);
    for r in records {
        texts.push(r.text.clone());
        texts.push(serialize_pairs(&r.pairs, train.target_order)?);
    }
    Ok(texts)
}

fn tokenize(a: &TokenizeArgs, config: &RunConfig, policy: &NormalizationPolicy, out: &Path) -> Result<Vec<PathBuf>> {
    let records = read(&a.train, policy)?;
    let vocab = train_subword(&tokenizer_texts(&records, &config.train)?, &config.tokenizer)?;
    println!("vocabulary of {} pieces", vocab.size());
    let path = out.join("vocab.txt");
    vocab.save(&path)?;
    Ok(vec![path])
}

#[derive(Serialize)]
struct TrainSummary {
    best_step: u64,
    best_mmp_f1: f64,
    steps: u64,
    stop_reason: mpe_models::StopReason,
}

/// Trains on record files with progress lines on stdout.
pub fn fit(
    model: &ModelConfig,
    train_config: &TrainConfig,
    train_records: &[MpeRecord],
    validation_records: &[MpeRecord],
    vocab: &Vocabulary,
    mut on_validation: impl FnMut(&mpe_models::CurvePoint) -> Control,
) -> Result<TrainOutcome<f32>> {
    let train_set = prepare_examples(train_records, vocab, model, train_config.target_order)?;
    let validation_set = prepare_examples(validation_records, vocab, model, train_config.target_order)?;
    let init: Model<f32> = Model::new(model.clone(), vocab.size(), train_config.seed)?;
    Ok(train(init, &train_set, &validation_set, vocab, train_config, |p| {
        on_validation(p)
    })?)
}

fn train_command(a: &TrainArgs, config: &RunConfig, policy: &NormalizationPolicy, out: &Path) -> Result<Vec<PathBuf>> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let train_records = read(&a.train, policy)?;
    let validation_records = read(&a.validation, policy)?;
    let outcome = fit(
        &config.model,
        &config.train,
        &train_records,
        &validation_records,
        &vocab,
        |p| {
            println!("step {:>6}  loss {:.4}  mmp_f1 {:.1}", p.step, p.loss, p.mmp_f1 * 100.0);
            Control::Continue
        },
    )?;
    println!(
        "best validation MMP-F1 {:.1} at step {} ({:?} after {} steps)",
        outcome.best_mmp_f1 * 100.0,
        outcome.best_step,
        outcome.stop_reason,
        outcome.steps
    );
    let summary = TrainSummary {
        best_step: outcome.best_step,
        best_mmp_f1: outcome.best_mmp_f1,
        steps: outcome.steps,
        stop_reason: outcome.stop_reason,
    };
    let ckpt = out.join("model.ckpt");
    save_model(
        &outcome.model,
        &vocab,
        None,
        serde_json::to_value(&summary).unwrap(),
        &ckpt,
    )?;
    Ok(vec![
        ckpt,
        write_text(&out.join("curve.tsv"), &outcome.curve.to_text())?,
        write_json(&out.join("train_summary.json"), &summary)?,
    ])
}

/// Decodes `records` with a checkpoint and scores them.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    vocab: &Vocabulary,
    records: &[MpeRecord],
    labels: &DiagnosticLabels,
    beam: usize,
    target_order: mpe_core::tokenizer::PairOrder,
    policy: &NormalizationPolicy,
) -> Result<(BTreeMap<String, Vec<PropertyValuePair>>, MetricReport)> {
    let (model, meta) = load_model::<f32>(checkpoint, vocab)?;
    let examples = prepare_examples(records, vocab, &meta.model, target_order)?;
    Ok(evaluate(
        &model,
        records,
        &examples,
        vocab,
        Strategy::from_width(beam),
        labels,
        policy,
    )?)
}

fn evaluate_command(
    a: &EvaluateArgs,
    config: &RunConfig,
    policy: &NormalizationPolicy,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let eval = read(&a.eval, policy)?;
    let labels = match (&a.labels, &a.train) {
        (Some(path), _) => DiagnosticLabels::load(path)?,
        (None, Some(train_path)) => compute_labels(&read(train_path, policy)?, &eval, config, policy)?,
        (None, None) => DiagnosticLabels::default(),
    };
    let mut written = Vec::new();
    let report = match (&a.predictions, &a.checkpoint, &a.vocab) {
        (Some(path), _, _) => build_report(&eval, &load_predictions(path, policy)?, &labels, policy)?,
        (None, Some(ckpt), Some(vocab_path)) => {
            let vocab = Vocabulary::load(vocab_path)?;
            let (predictions, report) = evaluate_checkpoint(
                ckpt,
                &vocab,
                &eval,
                &labels,
                config.train.beam_size,
                config.train.target_order,
                policy,
            )?;
            written.push(save_predictions(&out.join("predictions.jsonl"), &predictions)?);
            report
        }
        _ => {
            return Err(CliError::Usage(
                "evaluate needs --predictions or --checkpoint with --vocab".into(),
            ))
        }
    };
    print!("{}", report.to_table());
    written.push(write_json(&out.join("report.json"), &report)?);
    Ok(written)
}

fn load_space(name: &str) -> Result<SearchSpace> {
    Ok(match name {
        "desk" => SearchSpace::desk(),
        "paper" => SearchSpace::paper(),
        path => SearchSpace::load(path)?,
    })
}

fn param<'a>(params: &'a Params, name: &str) -> Option<&'a mpe_hpo::ParamValue> {
    params.get(name)
}

/// Maps sampled hyperparameters onto the model and training configs.
/// Encoder and decoder settings not listed in the space keep their values.
pub fn apply_params(params: &Params, model: &mut ModelConfig, train: &mut TrainConfig) -> Result<()> {
    let bad = |name: &str| CliError::Config(format!("hyperparameter {name} has an unusable value"));
    let int = |name: &str| -> Result<Option<usize>> {
        param(params, name)
            .map(|v| {
                v.as_i64()
                    .filter(|&i| i > 0)
                    .map(|i| i as usize)
                    .ok_or_else(|| bad(name))
            })
            .transpose()
    };
    let real = |name: &str| -> Result<Option<f64>> {
        param(params, name)
            .map(|v| v.as_f64().ok_or_else(|| bad(name)))
            .transpose()
    };
    let flag = |name: &str| -> Result<Option<bool>> {
        param(params, name)
            .map(|v| v.as_bool().ok_or_else(|| bad(name)))
            .transpose()
    };
    for name in params.keys() {
        const KNOWN: &[&str] = &[
            "batch_size",
            "lr",
            "lr_scheduler",
            "hidden_dropout",
            "attention_dropout",
            "activation_dropout",
            "weight_decay",
            "encoder_layers",
            "decoder_layers",
            "embedding_dim",
            "ffn_dim",
            "attention_heads",
            "activation",
            "learned_positional",
            "share_all_embeddings",
        ];
        if !KNOWN.contains(&name.as_str()) {
            return Err(CliError::Config(format!("unknown hyperparameter {name:?}")));
        }
    }
    set(&mut train.batch_size, int("batch_size")?);
    set(&mut train.optimizer.lr, real("lr")?);
    set(&mut train.optimizer.weight_decay, real("weight_decay")?);
    if let Some(v) = param(params, "lr_scheduler") {
        let warmup = match train.optimizer.schedule {
            Schedule::InverseSqrt { warmup } | Schedule::LinearDecay { warmup, .. } => warmup,
            Schedule::Constant => 100,
        };
        train.optimizer.schedule = match v.as_str() {
            Some("inverse_sqrt") => Schedule::InverseSqrt { warmup },
            Some("linear") => Schedule::LinearDecay {
                warmup,
                total: train.max_steps,
            },
            _ => return Err(bad("lr_scheduler")),
        };
    }
    set(&mut model.hidden_dropout, real("hidden_dropout")?);
    set(&mut model.attention_dropout, real("attention_dropout")?);
    set(&mut model.activation_dropout, real("activation_dropout")?);
    set(&mut model.encoder_layers, int("encoder_layers")?);
    set(&mut model.decoder_layers, int("decoder_layers")?);
    set(&mut model.embedding_dim, int("embedding_dim")?);
    set(&mut model.ffn_dim, int("ffn_dim")?);
    set(&mut model.attention_heads, int("attention_heads")?);
    if let Some(v) = param(params, "activation") {
        model.activation = match v.as_str() {
            Some("relu") => Activation::Relu,
            Some("gelu") => Activation::Gelu,
            _ => return Err(bad("activation")),
        };
    }
    if let Some(learned) = flag("learned_positional")? {
        model.positional = if learned {
            Positional::Learned
        } else {
            Positional::Sinusoidal
        };
    }
    set(&mut model.tie_all_embeddings, flag("share_all_embeddings")?);
    Ok(())
}

fn hpo(a: &HpoArgs, config: &RunConfig, policy: &NormalizationPolicy, out: &Path) -> Result<Vec<PathBuf>> {
    let log_path = out.join("study.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?);
    let mut on_trial = |t: &Trial| -> mpe_hpo::Result<()> {
        println!(
            "trial {:>3}  {:<9}  {}",
            t.id,
            format!("{:?}", t.status).to_lowercase(),
            t.value.map_or("-".into(), |v| format!("{v:.4}"))
        );
        mpe_hpo::study::write_log(std::slice::from_ref(t), &mut log).map_err(|source| mpe_hpo::Error::Io {
            path: log_path.clone(),
            source,
        })
    };
    let result = match a.objective {
        Objective::Quadratic => {
            let space = SearchSpace::new().with(
                "x",
                ParamSpec::Real {
                    low: 0.0,
                    high: 10.0,
                    log: false,
                },
            );
            run_study(
                &space,
                &config.study,
                |r| {
                    let x = r.params()["x"].as_f64().ok_or("x is not a number")?;
                    Ok(-(x - 3.0).powi(2))
                },
                &mut on_trial,
            )?
        }
        Objective::Train => {
            let space = load_space(&a.space)?;
            let (Some(train_path), Some(validation_path), Some(vocab_path)) = (&a.train, &a.validation, &a.vocab)
            else {
                return Err(CliError::Usage(
                    "--objective train needs --train, --validation and --vocab".into(),
                ));
            };
            let vocab = Vocabulary::load(vocab_path)?;
            let train_records = read(train_path, policy)?;
            let validation_records = read(validation_path, policy)?;
            run_study(
                &space,
                &config.study,
                |r| {
                    let mut model = config.model.clone();
                    let mut train_config = config.train.clone();
                    train_config.seed = config.seed.wrapping_add(r.trial_id() as u64);
                    apply_params(r.params(), &mut model, &mut train_config)?;
                    model.validate()?;
                    let outcome = fit(
                        &model,
                        &train_config,
                        &train_records,
                        &validation_records,
                        &vocab,
                        |p| {
                            if r.report(p.step, p.mmp_f1) {
                                Control::Prune
                            } else {
                                Control::Continue
                            }
                        },
                    )?;
                    Ok(outcome.best_mmp_f1)
                },
                &mut on_trial,
            )?
        }
    };
    log.flush().map_err(|e| CliError::io(&log_path, e))?;
    let best = result.best();
    match best {
        Some(t) => println!("best trial {} with objective {:.4}", t.id, t.value.unwrap_or(f64::NAN)),
        None => println!("no trial completed"),
    }
    Ok(vec![log_path, write_json(&out.join("best.json"), &best)?])
}
