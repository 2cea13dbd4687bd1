use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use towe_core::corpus::{convert_legacy_tsv, load_dataset, load_unlabeled, Dataset, SentenceExample, Split};
use towe_core::encoding::{encode_example, write_prepared, EncodeConfig, PreparedRecord, Variant};
use towe_core::eval::{ablation_report, average_runs, AggregateReport, EvalReport};
use towe_core::model::{save_checkpoint, FeatureMode, FeatureStore, Hyperparameters};
use towe_core::subword::{save_merges, save_vocab, tokenize_sentence, train_bpe, Tokenizer};
use towe_core::synth::{coreference, subword_sharing, CoreferenceConfig, SubwordSharingConfig};
use towe_core::train::{evaluate as score, predict_spans, prepare_instances, train_multi, Instance, TrainConfig};

use crate::artifacts::*;
use crate::config::{parse_seeds, ConfigFile};
use crate::{
    AblateArgs, ConvertArgs, EvaluateArgs, PrepareArgs, PredictArgs, SynthArgs, SynthKind,
    TrainArgs, TrainVocabArgs,
};

fn load(path: &Path, split: Split) -> Result<Dataset> {
    load_dataset(path, split).with_context(|| format!("dataset {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn train_vocab(a: TrainVocabArgs) -> Result<()> {
    let data = load_unlabeled(&a.corpus).with_context(|| format!("corpus {}", a.corpus.display()))?;
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for ex in &data.examples {
        for w in &ex.words {
            *counts.entry(w.as_str()).or_insert(0) += 1;
        }
    }
    let (merges, vocab) = train_bpe(counts, a.num_merges)?;
    create_dir(&a.out)?;
    save_merges(&merges, a.out.join("merges.txt"))?;
    save_vocab(&vocab, a.out.join("vocab.txt"))?;
    eprintln!("{} merges, {} pieces", merges.len(), vocab.len());
    Ok(())
}

pub fn prepare(a: PrepareArgs) -> Result<()> {
    let data = load_unlabeled(&a.data).with_context(|| format!("dataset {}", a.data.display()))?;
    let tok = load_tokenizer(&a.tokenizer.vocab, a.tokenizer.merges.as_deref())?;
    let variant: Variant = a.variant.parse()?;
    let cfg = EncodeConfig {
        window: a.window,
        max_len: a.max_len,
    };
    let records = data
        .examples
        .iter()
        .map(|ex| {
            Ok(PreparedRecord {
                id: ex.id.clone(),
                pieces: tokenize_sentence(&ex.words, &tok, ex.aspect_span).pieces,
                input: encode_example(ex, &tok, variant, a.mask_aspect, &cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_prepared(&records, &a.out)?;
    Ok(())
}

/// Per-checkpoint scores as written to report files.
#[derive(Debug, Serialize)]
struct RunReport {
    checkpoint: String,
    seed: u64,
    variant: Variant,
    mask_aspect: bool,
    #[serde(flatten)]
    scores: EvalReport,
}

#[derive(Debug, Serialize)]
struct Report {
    runs: Vec<RunReport>,
    mean_f1: f64,
    mean_f1_percent: String,
}

impl Report {
    fn new(runs: Vec<RunReport>) -> Self {
        let mean_f1 = average_runs(&runs.iter().map(|r| r.scores.f1).collect::<Vec<_>>());
        Report {
            runs,
            mean_f1,
            mean_f1_percent: towe_core::eval::percent(mean_f1),
        }
    }

    fn table(&self) -> String {
        AggregateReport::new(self.runs.iter().map(|r| r.scores).collect()).to_string()
    }
}

fn instances(
    data: &Dataset,
    tok: &Tokenizer,
    variant: Variant,
    mask: bool,
    cfg: &EncodeConfig,
    features: Option<&FeatureStore>,
) -> Result<Vec<Instance>> {
    Ok(prepare_instances(data, tok, variant, mask, cfg, features)?)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let file = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let defaults = TrainConfig::default();
    let variant: Variant = file.pick(a.variant.clone(), "variant", "SA".to_string())?.parse()?;
    let mask_aspect = file.switch(a.mask_aspect, "mask_aspect")?;
    let seeds = parse_seeds(&file.pick(a.seeds.clone(), "seeds", "1,2,3,4,5".to_string())?)?;
    let config = TrainConfig {
        learning_rate: file.pick(a.lr, "lr", defaults.learning_rate)?,
        beta1: file.pick(None, "beta1", defaults.beta1)?,
        beta2: file.pick(None, "beta2", defaults.beta2)?,
        epsilon: file.pick(None, "adam_epsilon", defaults.epsilon)?,
        max_epochs: file.pick(a.max_epochs, "max_epochs", defaults.max_epochs)?,
        patience: file.pick(a.patience, "patience", defaults.patience)?,
        seeds,
        eval_every: file.pick(a.eval_every, "eval_every", defaults.eval_every)?,
        variant,
        mask_aspect,
    };
    config.validate()?;

    let train = load(&a.train, Split::Train)?;
    let dev = load(&a.dev, Split::Dev)?;
    let test = a.test.as_deref().map(|p| load(p, Split::Test)).transpose()?;
    ensure!(!train.is_empty(), "training set {} is empty", a.train.display());
    ensure!(!dev.is_empty(), "dev set {} is empty", a.dev.display());
    let tok = load_tokenizer(&a.tokenizer.vocab, a.tokenizer.merges.as_deref())?;
    let features = load_features(a.features.as_deref())?;

    let base = Hyperparameters::new(tok.vocab().len());
    let mut hp = Hyperparameters {
        embed_dim: file.pick(a.embed_dim, "embed_dim", base.embed_dim)?,
        hidden_dim: file.pick(a.hidden_dim, "hidden_dim", base.hidden_dim)?,
        window: file.pick(a.window, "window", base.window)?,
        use_position: file.switch(a.use_position, "use_position")?,
        use_segment: file.switch(a.use_segment, "use_segment")?,
        ..base
    };
    if let Some(store) = &features {
        let dim = store.dim().context("feature file holds no examples")?;
        if a.embed_dim.is_some() || file.get::<usize>("embed_dim")?.is_some() {
            ensure!(hp.embed_dim == dim, "embed_dim {} but features have {dim} columns", hp.embed_dim);
        }
        hp.embed_dim = dim;
        hp.feature_mode = FeatureMode::ExternalFeatures;
    }
    hp.validate()?;
    let cfg = EncodeConfig {
        window: hp.window,
        max_len: file.pick(a.max_len, "max_len", EncodeConfig::default().max_len)?,
    };

    let f = features.as_ref();
    let train_i = instances(&train, &tok, variant, mask_aspect, &cfg, f)?;
    let dev_i = instances(&dev, &tok, variant, mask_aspect, &cfg, f)?;
    let test_i = test
        .as_ref()
        .map(|t| instances(t, &tok, variant, mask_aspect, &cfg, f))
        .transpose()?;
    create_dir(&a.out_dir)?;

    let on_epoch = |r: &towe_core::train::EpochRecord| {
        let line = serde_json::to_string(r).expect("epoch record serializes");
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
    };
    let run = train_multi::<f64>(&train_i, &dev_i, test_i.as_deref().unwrap_or(&dev_i), &hp, &config, &on_epoch)
        .context("training failed")?;

    let mut reports = Vec::new();
    for r in &run.runs {
        let name = format!("seed-{}.ckpt", r.seed);
        let path = a.out_dir.join(&name);
        save_checkpoint(&r.params, &path)?;
        let meta = CheckpointMeta {
            seed: r.seed,
            variant,
            mask_aspect,
            max_len: cfg.max_len,
            tokenizer: tokenizer_kind(&tok),
            vocab_checksum: checksum_hex(&tok),
            hyperparameters: Hyperparameters { seed: r.seed, ..hp },
        };
        write_json(&meta_path(&path), &meta)?;
        write_json(&a.out_dir.join(format!("seed-{}.history.json", r.seed)), &r.history)?;
        reports.push(RunReport {
            checkpoint: name,
            seed: r.seed,
            variant,
            mask_aspect,
            scores: r.test,
        });
    }
    if test_i.is_some() {
        let report = Report::new(reports);
        write_json(&a.out_dir.join("report.json"), &report)?;
        eprintln!("{}", report.table());
    }
    Ok(())
}

/// Scores every checkpoint in `paths` on `data`. Variant and masking come
/// from each checkpoint's metadata unless `force` overrides them.
fn score_checkpoints(
    paths: &[std::path::PathBuf],
    data: &Dataset,
    tok: &Tokenizer,
    features: Option<&FeatureStore>,
    force: Option<(Variant, bool)>,
) -> Result<Vec<RunReport>> {
    paths
        .iter()
        .map(|p| {
            let m = load_model(p, tok)?;
            let (variant, mask) = force.unwrap_or((m.meta.variant, m.meta.mask_aspect));
            let hp = m.meta.hyperparameters;
            if hp.feature_mode == FeatureMode::ExternalFeatures && features.is_none() {
                bail!("checkpoint {} needs --features", p.display());
            }
            let cfg = EncodeConfig {
                window: hp.window,
                max_len: m.meta.max_len,
            };
            let inst = instances(data, tok, variant, mask, &cfg, features)?;
            Ok(RunReport {
                checkpoint: file_name(&m.path),
                seed: m.meta.seed,
                variant,
                mask_aspect: mask,
                scores: score(&m.params, &hp, &inst)?,
            })
        })
        .collect()
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let data = load(&a.test, Split::Test)?;
    let tok = load_tokenizer(&a.tokenizer.vocab, a.tokenizer.merges.as_deref())?;
    let features = load_features(a.features.as_deref())?;
    let force = match &a.variant {
        Some(v) => Some((v.parse()?, a.mask_aspect)),
        None if a.mask_aspect => bail!("--mask-aspect needs --variant"),
        None => None,
    };
    let paths = expand_checkpoints(&a.checkpoint)?;
    let report = Report::new(score_checkpoints(&paths, &data, &tok, features.as_ref(), force)?);
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    println!("{}", report.table());
    Ok(())
}

#[derive(Debug, Serialize)]
struct AblationOutput {
    table: towe_core::eval::AblationTable,
    runs: BTreeMap<String, Vec<RunReport>>,
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let data = load(&a.test, Split::Test)?;
    let tok = load_tokenizer(&a.tokenizer.vocab, a.tokenizer.merges.as_deref())?;
    let features = load_features(a.features.as_deref())?;
    let rows = [
        ("BiLSTM(S)", &a.sentence, Variant::S, false),
        ("BiLSTM(S,A)", &a.pair, Variant::SA, false),
        ("-mask(S)", &a.masked, Variant::S, true),
    ];
    let mut runs = BTreeMap::new();
    let mut table_input = Vec::new();
    for (name, list, variant, mask) in rows {
        let paths = expand_checkpoints(list)?;
        for p in &paths {
            let m = load_model(p, &tok)?;
            if (m.meta.variant, m.meta.mask_aspect) != (variant, mask) {
                bail!(
                    "{} was trained as variant {} (mask_aspect {}) but passed for {name}",
                    p.display(),
                    m.meta.variant,
                    m.meta.mask_aspect
                );
            }
        }
        let reports = score_checkpoints(&paths, &data, &tok, features.as_ref(), Some((variant, mask)))?;
        table_input.push((name.to_string(), reports.iter().map(|r| r.scores).collect()));
        runs.insert(name.to_string(), reports);
    }
    let table = ablation_report(&table_input);
    print!("{table}");
    if let Some(p) = &a.report {
        write_json(p, &AblationOutput { table, runs })?;
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let data = load_unlabeled(&a.input).with_context(|| format!("input {}", a.input.display()))?;
    let tok = load_tokenizer(&a.tokenizer.vocab, a.tokenizer.merges.as_deref())?;
    let features = load_features(a.features.as_deref())?;
    let m = load_model(&a.checkpoint, &tok)?;
    let hp = m.meta.hyperparameters;
    if hp.feature_mode == FeatureMode::ExternalFeatures && features.is_none() {
        bail!("checkpoint {} needs --features", a.checkpoint.display());
    }
    let cfg = EncodeConfig {
        window: hp.window,
        max_len: m.meta.max_len,
    };
    let inst = instances(&data, &tok, m.meta.variant, m.meta.mask_aspect, &cfg, features.as_ref())?;
    let predicted = predict_spans(&m.params, &hp, &inst)?;
    let examples = data
        .examples
        .iter()
        .zip(predicted)
        .map(|(ex, (_, spans))| {
            SentenceExample::new(ex.id.clone(), ex.words.clone(), ex.aspect_span, spans)
                .map_err(anyhow::Error::from)
        })
        .collect::<Result<Vec<_>>>()
        .context("predicted spans overlap the aspect")?;
    Dataset::new(examples, Split::Test)?.save(&a.out)?;
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let corpus = match a.kind {
        SynthKind::Subword => {
            let d = SubwordSharingConfig::default();
            subword_sharing(&SubwordSharingConfig {
                sentences: a.sentences.unwrap_or(d.sentences),
                seed: a.seed.unwrap_or(d.seed),
                ..d
            })
        }
        SynthKind::Coreference => {
            let d = CoreferenceConfig::default();
            coreference(&CoreferenceConfig {
                sentences: a.sentences.unwrap_or(d.sentences),
                seed: a.seed.unwrap_or(d.seed),
                ..d
            })
        }
    };
    ensure!(!corpus.test.is_empty(), "too few sentences for three splits");
    create_dir(&a.out_dir)?;
    corpus.train.save(a.out_dir.join("train.jsonl"))?;
    corpus.dev.save(a.out_dir.join("dev.jsonl"))?;
    corpus.test.save(a.out_dir.join("test.jsonl"))?;
    save_vocab(&corpus.vocab, a.out_dir.join("vocab.txt"))?;
    Ok(())
}

pub fn convert_tsv(a: ConvertArgs) -> Result<()> {
    let split = match a.split.as_str() {
        "train" => Split::Train,
        "dev" => Split::Dev,
        "test" => Split::Test,
        other => bail!("unknown split {other:?} (expected train, dev or test)"),
    };
    let data = convert_legacy_tsv(&a.input, split).with_context(|| format!("converting {}", a.input.display()))?;
    data.save(&a.out)?;
    eprintln!("{} examples", data.len());
    Ok(())
}
