use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use disentangle::corpus::{build_vocab, load_channels, Channel, CorpusStats, Vocabulary, WindowConfig};
use disentangle::ensemble::{average_models, ensemble_predict, Strategy};
use disentangle::features::schema_text;
use disentangle::inference::{predict_examples, ChannelPrediction};
use disentangle::metrics::evaluate as score;
use disentangle::ranker::{
    build_examples, load_checkpoint, posttrain, save_checkpoint, train as fit, DialBert, DialBertConfig,
    EncoderConfig, Example, FeedforwardRanker, LinearRanker, Model, ModelKind, PosttrainConfig, PosttrainHeads,
    Ranker, TrainConfig, TrainLog,
};
use disentangle::synth::{synthesize, write_channels, SynthConfig};

use crate::settings::{parse_key_values, write_key_values, Settings, Switch};
use crate::{EnsembleArgs, EvaluateArgs, PredictArgs, StatsArgs, SynthArgs, TrainArgs, WindowArgs};

const CHECKPOINT: &str = "model.ckpt";
const VOCAB: &str = "vocab.txt";
const WINDOW: &str = "window.txt";
const LOG: &str = "train.log";

const WINDOW_KEYS: [&str; 3] = ["context-range", "future", "max-seq-len"];

fn load_nonempty(path: &Path) -> Result<Vec<Channel>> {
    let channels = load_channels(path).with_context(|| format!("loading {}", path.display()))?;
    ensure!(!channels.is_empty(), "no annotated .tsv or .txt files under {}", path.display());
    Ok(channels)
}

fn window_from(args: &WindowArgs, settings: &Settings, saved: &Settings) -> Result<WindowConfig> {
    let d = WindowConfig::default();
    let pick = |flag: Option<usize>, key: &str, default: usize| -> Result<usize> {
        let fallback = saved.get(None, key, default)?;
        settings.get(flag, key, fallback)
    };
    let window = WindowConfig {
        context_range: pick(args.context_range, "context-range", d.context_range)?,
        future: pick(args.future, "future", d.future)?,
        max_seq_len: pick(args.max_seq_len, "max-seq-len", d.max_seq_len)?,
    };
    window.validate()?;
    Ok(window)
}

fn window_values(w: &WindowConfig) -> BTreeMap<String, String> {
    [
        ("context-range", w.context_range),
        ("future", w.future),
        ("max-seq-len", w.max_seq_len),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn synth(a: &SynthArgs, out: &mut impl Write) -> Result<()> {
    let s = Settings::load(
        a.config.as_deref(),
        &[
            "seed",
            "channels",
            "conversations",
            "messages",
            "themes",
            "words-per-theme",
            "speakers",
            "speaker-pool",
            "join-rate",
            "address-rate",
            "dev",
            "test",
        ],
    )?;
    let d = SynthConfig::default();
    let config = SynthConfig {
        seed: s.get(a.seed, "seed", d.seed)?,
        channels: s.get(a.channels, "channels", d.channels)?,
        conversations: s.get(a.conversations, "conversations", d.conversations)?,
        messages: s.get(a.messages, "messages", d.messages)?,
        themes: s.get(a.themes, "themes", d.themes)?,
        words_per_theme: s.get(a.words_per_theme, "words-per-theme", d.words_per_theme)?,
        speakers_per_conversation: s.get(a.speakers, "speakers", d.speakers_per_conversation)?,
        speaker_pool: s.get(a.speaker_pool, "speaker-pool", d.speaker_pool)?,
        join_rate: s.get(a.join_rate, "join-rate", d.join_rate)?,
        address_rate: s.get(a.address_rate, "address-rate", d.address_rate)?,
        ..d
    };
    let dev: usize = s.get(a.dev, "dev", 0)?;
    let test: usize = s.get(a.test, "test", 0)?;
    ensure!(
        dev + test < config.channels || dev + test == 0,
        "--dev {dev} and --test {test} leave no training channels out of {}",
        config.channels
    );
    let channels = synthesize(&config)?;
    if dev + test == 0 {
        write_channels(&a.out, &channels)?;
    } else {
        let train_end = channels.len() - dev - test;
        write_channels(&a.out.join("train"), &channels[..train_end])?;
        if dev > 0 {
            write_channels(&a.out.join("dev"), &channels[train_end..train_end + dev])?;
        }
        if test > 0 {
            write_channels(&a.out.join("test"), &channels[train_end + dev..])?;
        }
    }
    let messages: usize = channels.iter().map(Channel::len).sum();
    writeln!(out, "wrote {} channels ({messages} messages) to {}", channels.len(), a.out.display())?;
    Ok(())
}

const TRAIN_KEYS: &[&str] = &[
    "kind",
    "context-range",
    "future",
    "max-seq-len",
    "alpha",
    "seed",
    "shuffle-seed",
    "features",
    "aggregator",
    "epochs",
    "learning-rate",
    "batch-size",
    "width",
    "layers",
    "heads",
    "ff-width",
    "hidden",
    "dropout",
    "posttrain-epochs",
    "min-count",
];

pub fn train(a: &TrainArgs, out: &mut impl Write) -> Result<()> {
    let s = Settings::load(a.config.as_deref(), TRAIN_KEYS)?;
    let kind: ModelKind = s.get(a.kind.clone(), "kind", "dialbert".to_string())?.parse()?;
    let window = window_from(&a.window, &s, &Settings::default())?;
    let td = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: s.get(a.learning_rate, "learning-rate", td.learning_rate)?,
        batch_size: s.get(a.batch_size, "batch-size", td.batch_size)?,
        epochs: s.get(a.epochs, "epochs", td.epochs)?,
        alpha: s.get(a.alpha, "alpha", td.alpha)?,
        seed: s.get(a.seed, "seed", td.seed)?,
        shuffle_seed: s.get(a.shuffle_seed, "shuffle-seed", td.shuffle_seed)?,
        ..td
    };
    config.validate()?;
    let features = s.get(a.features, "features", Switch::Off)?.is_on();
    let aggregator = s.get(a.aggregator, "aggregator", Switch::On)?.is_on();
    let posttrain_epochs: usize = s.get(a.posttrain_epochs, "posttrain-epochs", 0)?;
    if kind != ModelKind::DialBert {
        ensure!(posttrain_epochs == 0, "--posttrain-epochs applies only to dialbert models");
        ensure!(aggregator, "--aggregator applies only to dialbert models");
    }

    let channels = load_nonempty(&a.data)?;
    let vocab = build_vocab(&channels, s.get(a.min_count, "min-count", 1)?)?;
    let needs_features = kind != ModelKind::DialBert || features;
    let train_set: Vec<Example> = build_examples(&channels, &vocab, &window, needs_features)?
        .into_iter()
        .flatten()
        .collect();
    let dev_set: Vec<Example> = match &a.dev {
        Some(path) => build_examples(&load_nonempty(path)?, &vocab, &window, needs_features)?
            .into_iter()
            .flatten()
            .collect(),
        None => Vec::new(),
    };
    log::info!("{} training and {} development windows", train_set.len(), dev_set.len());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (model, log) = match kind {
        ModelKind::DialBert => {
            let ed = EncoderConfig::default();
            let dd = DialBertConfig::default();
            let encoder = EncoderConfig {
                vocab_size: vocab.len(),
                width: s.get(a.width, "width", ed.width)?,
                layers: s.get(a.layers, "layers", ed.layers)?,
                heads: s.get(a.heads, "heads", ed.heads)?,
                ff_width: s.get(a.ff_width, "ff-width", ed.ff_width)?,
                max_seq_len: window.max_seq_len,
                dropout: s.get(a.dropout, "dropout", ed.dropout)?,
            };
            let cfg = DialBertConfig {
                encoder,
                aggregator_hidden: s.get(a.hidden, "hidden", dd.aggregator_hidden)?,
                use_aggregator: aggregator,
                use_features: features,
            };
            let mut model = DialBert::new(cfg, &mut rng)?;
            if posttrain_epochs > 0 {
                let mut heads = PosttrainHeads::new(&model, &mut rng);
                let pc = PosttrainConfig {
                    epochs: posttrain_epochs,
                    learning_rate: config.learning_rate,
                    batch_size: config.batch_size,
                    seed: config.seed,
                };
                posttrain(&mut model, &mut heads, &channels, &vocab, &pc)?;
            }
            let (m, log) = fit(model, &train_set, &dev_set, &config)?;
            (Model::DialBert(m), log)
        }
        ModelKind::Linear => {
            let (m, log) = fit(LinearRanker::zeros(), &train_set, &dev_set, &config)?;
            (Model::Linear(m), log)
        }
        ModelKind::Feedforward => {
            let (m, log) = fit(FeedforwardRanker::new(&mut rng), &train_set, &dev_set, &config)?;
            (Model::Feedforward(m), log)
        }
    };
    save_model_dir(&a.model, &model, &vocab, &window, Some(&log))?;
    let mut summary = format!(
        "trained {} model: epochs={} final_loss={:.4} skipped_targets={}",
        kind.as_str(),
        log.epochs.len(),
        log.epochs.last().map_or(f64::NAN, |e| e.loss),
        log.skipped_targets
    );
    if let (Some(_), Some(best)) = (&a.dev, log.best_epoch.checked_sub(1).map(|i| &log.epochs[i])) {
        summary += &format!(" best_epoch={} dev_accuracy={:.4}", log.best_epoch, best.dev_accuracy);
    }
    writeln!(out, "{summary}")?;
    writeln!(out, "saved to {}", a.model.display())?;
    Ok(())
}

fn save_model_dir(
    dir: &Path,
    model: &Model,
    vocab: &Vocabulary,
    window: &WindowConfig,
    log: Option<&TrainLog>,
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    save_checkpoint(&dir.join(CHECKPOINT), model)?;
    vocab.save(&dir.join(VOCAB))?;
    write_key_values(&dir.join(WINDOW), &window_values(window))?;
    if let Some(log) = log {
        std::fs::write(dir.join(LOG), log.to_lines()).with_context(|| format!("writing {}", dir.join(LOG).display()))?;
    }
    Ok(())
}

/// A model with its vocabulary and saved window settings.
struct LoadedModel {
    model: Model,
    vocab: Vocabulary,
    saved: Settings,
}

/// Accepts a model directory or a checkpoint file inside one.
fn load_model_dir(path: &Path) -> Result<LoadedModel> {
    let dir: PathBuf = if path.is_file() {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        path.to_path_buf()
    };
    let ckpt = if path.is_file() { path.to_path_buf() } else { dir.join(CHECKPOINT) };
    let model = load_checkpoint(&ckpt).with_context(|| format!("loading model {}", ckpt.display()))?;
    let vocab = Vocabulary::load(&dir.join(VOCAB)).with_context(|| format!("loading vocabulary in {}", dir.display()))?;
    let window_path = dir.join(WINDOW);
    let saved = if window_path.exists() {
        let text = std::fs::read_to_string(&window_path).with_context(|| format!("reading {}", window_path.display()))?;
        Settings::from_values(parse_key_values(&text)?, Some(window_path), &WINDOW_KEYS)?
    } else {
        Settings::default()
    };
    if let Model::DialBert(m) = &model {
        ensure!(
            m.config().encoder.vocab_size == vocab.len(),
            "model expects {} tokens but {} lists {}",
            m.config().encoder.vocab_size,
            dir.join(VOCAB).display(),
            vocab.len()
        );
    }
    Ok(LoadedModel { model, vocab, saved })
}

fn check_window(model: &Model, window: &WindowConfig) -> Result<()> {
    if let Model::DialBert(m) = model {
        let limit = m.config().encoder.max_seq_len;
        if window.max_seq_len > limit {
            bail!(
                "--max-seq-len {} exceeds the {} positions the model was trained with",
                window.max_seq_len,
                limit
            );
        }
    }
    Ok(())
}

fn write_predictions(
    dir: &Path,
    channels: &[Channel],
    predictions: &[ChannelPrediction],
    out: &mut impl Write,
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut messages = 0;
    let mut conversations = 0;
    for (ch, p) in channels.iter().zip(predictions) {
        let path = dir.join(format!("{}.tsv", ch.name));
        std::fs::write(&path, ch.to_annotated_with(&p.graph)).with_context(|| format!("writing {}", path.display()))?;
        messages += ch.len();
        conversations += p.clustering.num_clusters();
    }
    writeln!(
        out,
        "predicted {} channels: messages={messages} conversations={conversations}",
        channels.len()
    )?;
    writeln!(out, "wrote {}", dir.display())?;
    Ok(())
}

pub fn predict(a: &PredictArgs, out: &mut impl Write) -> Result<()> {
    let s = Settings::load(a.config.as_deref(), &WINDOW_KEYS)?;
    let loaded = load_model_dir(&a.model)?;
    let window = window_from(&a.window, &s, &loaded.saved)?;
    check_window(&loaded.model, &window)?;
    let channels = load_nonempty(&a.data)?;
    let needs = loaded.model.needs_features();
    let groups = build_examples(&channels, &loaded.vocab, &window, needs)?;
    let predictions = groups
        .iter()
        .map(|g| predict_examples(&loaded.model, g))
        .collect::<disentangle::Result<Vec<_>>>()?;
    write_predictions(&a.out, &channels, &predictions, out)
}

pub fn evaluate(a: &EvaluateArgs, out: &mut impl Write) -> Result<()> {
    let gold = load_nonempty(&a.data)?;
    let pred = load_nonempty(&a.pred)?;
    let predictions: Vec<(String, _)> = pred.into_iter().map(|c| (c.name, c.gold_clusters)).collect();
    let report = score(&predictions, &gold)?;
    if report.empty_denominator {
        log::warn!("no multi-message conversations on one side; exact-match scores reported as 0");
    }
    write!(out, "{}", report.to_table())?;
    write!(out, "{}", report.to_key_values())?;
    Ok(())
}

pub fn ensemble(a: &EnsembleArgs, out: &mut impl Write) -> Result<()> {
    let mut keys = WINDOW_KEYS.to_vec();
    keys.push("strategy");
    let s = Settings::load(a.config.as_deref(), &keys)?;
    let strategy: Strategy = s.get(a.strategy.clone(), "strategy", "prob-avg".to_string())?.parse()?;
    ensure!(
        a.save.is_none() || strategy == Strategy::ModelAvg,
        "--save is only meaningful with --strategy model-avg"
    );
    let loaded = a.model.iter().map(|p| load_model_dir(p)).collect::<Result<Vec<_>>>()?;
    for (l, path) in loaded.iter().zip(&a.model).skip(1) {
        ensure!(
            l.vocab == loaded[0].vocab,
            "{} uses a different vocabulary from {}",
            path.display(),
            a.model[0].display()
        );
    }
    let mut loaded = loaded.into_iter();
    let first = loaded.next().expect("clap requires at least one model");
    let window = window_from(&a.window, &s, &first.saved)?;
    let models: Vec<Model> = std::iter::once(first.model).chain(loaded.map(|l| l.model)).collect();
    for m in &models {
        check_window(m, &window)?;
    }
    let channels = load_nonempty(&a.data)?;
    let needs = models.iter().any(Ranker::needs_features);
    let groups = build_examples(&channels, &first.vocab, &window, needs)?;
    let predictions = groups
        .iter()
        .map(|g| ensemble_predict(&models, strategy, g))
        .collect::<disentangle::Result<Vec<_>>>()?;
    if let Some(dir) = &a.save {
        save_model_dir(dir, &average_models(&models)?, &first.vocab, &window, None)?;
        writeln!(out, "saved averaged model to {}", dir.display())?;
    }
    write_predictions(&a.out, &channels, &predictions, out)
}

const SPLITS: [&str; 3] = ["train", "dev", "test"];

pub fn stats(a: &StatsArgs, out: &mut impl Write) -> Result<()> {
    let context_range: usize = a.context_range.unwrap_or(WindowConfig::default().context_range);
    let present: Vec<&str> = SPLITS.iter().copied().filter(|s| a.data.join(s).is_dir()).collect();
    let parts: Vec<(String, PathBuf)> = if present.is_empty() {
        vec![("all".to_string(), a.data.clone())]
    } else {
        present.iter().map(|s| (s.to_string(), a.data.join(s))).collect()
    };
    for (name, path) in parts {
        let stats = CorpusStats::compute(&load_nonempty(&path)?);
        writeln!(out, "[{name}]")?;
        writeln!(out, "{stats}")?;
        writeln!(out, "within_{context_range}={:.4}", stats.fraction_within(context_range))?;
        let hist: Vec<String> = stats.distance_histogram.iter().map(|(d, c)| format!("{d}:{c}")).collect();
        writeln!(out, "distance_histogram={}", hist.join(","))?;
    }
    Ok(())
}

pub fn features(out: &mut impl Write) -> Result<()> {
    write!(out, "{}", schema_text())?;
    Ok(())
}
