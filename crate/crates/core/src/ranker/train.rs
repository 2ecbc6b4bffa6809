use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optim::Adam;
use super::{forward_backward, Example, Ranker, TrainConfig};
use crate::corpus::{build_context_window, Channel, EncodedChannel, Vocabulary, WindowConfig};
use crate::error::{Error, Result};
use crate::features::featurize_batch;

/// Windows (and features, when requested) for every message of every
/// channel, grouped by channel.
pub fn build_examples(
    channels: &[Channel],
    vocab: &Vocabulary,
    window: &WindowConfig,
    with_features: bool,
) -> Result<Vec<Vec<Example>>> {
    channels
        .iter()
        .map(|ch| {
            let encoded = EncodedChannel::new(ch, vocab, window.max_seq_len);
            (0..ch.len())
                .map(|t| {
                    let batch = build_context_window(ch, &encoded, t, window)?;
                    let features = if with_features {
                        Some(featurize_batch(ch, &batch)?)
                    } else {
                        None
                    };
                    Ok(Example { batch, features })
                })
                .collect()
        })
        .collect()
}

/// Fraction of examples whose predicted slot is the gold parent slot.
/// Targets with the parent outside the window count as errors.
pub fn accuracy<R: Ranker>(model: &R, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for e in examples {
        let scores = model.score(e)?;
        if e.batch.parent_slot == Some(scores.argmax(&e.batch)) {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean total loss over the epoch's steps.
    pub loss: f64,
    pub ce: f64,
    pub cv: f64,
    pub dev_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 = initial parameters).
    pub best_epoch: usize,
    pub skipped_targets: usize,
}

impl TrainLog {
    /// Line-delimited `key=value` records, one per epoch.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            writeln!(
                out,
                "epoch={}\tloss={:.6}\tce={:.6}\tcv={:.6}\tdev_accuracy={:.6}",
                r.epoch, r.loss, r.ce, r.cv, r.dev_accuracy
            )
            .expect("writing to a String");
        }
        writeln!(out, "best_epoch={}\tskipped_targets={}", self.best_epoch, self.skipped_targets).expect("writing to a String");
        out
    }
}

/// Mini-batch training with best-on-dev checkpoint selection. Targets whose
/// gold parent lies outside the window are skipped.
pub fn train<R: Ranker>(mut model: R, train_set: &[Example], dev_set: &[Example], config: &TrainConfig) -> Result<(R, TrainLog)> {
    config.validate()?;
    let mut order: Vec<usize> = (0..train_set.len())
        .filter(|&i| train_set[i].batch.parent_slot.is_some())
        .collect();
    if order.is_empty() {
        return Err(Error::EmptyCorpus("no trainable targets"));
    }
    let mut log = TrainLog {
        skipped_targets: train_set.len() - order.len(),
        ..TrainLog::default()
    };
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut adam = Adam::new(model.params(), config.learning_rate, config.beta1, config.beta2, config.adam_eps);
    let use_dropout = model.dropout_rate() > 0.0;

    let mut best: Option<(f64, R)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut sum_total, mut sum_ce, mut sum_cv) = (0.0, 0.0, 0.0);
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut grads = model.params().zeros_like();
            let (mut total, mut ce, mut cv) = (0.0, 0.0, 0.0);
            for &i in chunk {
                let rng: Option<&mut dyn RngCore> = if use_dropout { Some(&mut dropout_rng) } else { None };
                let (loss, g) = forward_backward(&model, &train_set[i], config, rng, i)?;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    acc.add_assign(gi);
                }
                total += loss.total;
                ce += loss.ce;
                cv += loss.cv;
            }
            let n = chunk.len() as f64;
            for g in &mut grads {
                g.scale(1.0 / n);
            }
            let mean = total / n;
            if mean > config.divergence_threshold {
                return Err(Error::Diverged { epoch, step, loss: mean });
            }
            adam.step(model.params_mut(), &grads);
            sum_total += mean;
            sum_ce += ce / n;
            sum_cv += cv / n;
            steps += 1;
        }
        let dev_accuracy = accuracy(&model, dev_set)?;
        let steps = steps as f64;
        let record = EpochRecord {
            epoch,
            loss: sum_total / steps,
            ce: sum_ce / steps,
            cv: sum_cv / steps,
            dev_accuracy,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} (ce {:.4}, cv {:.4}), dev accuracy {:.4}",
            record.loss,
            record.ce,
            record.cv,
            dev_accuracy
        );
        log.epochs.push(record);
        if dev_set.is_empty() || best.as_ref().is_none_or(|(acc, _)| dev_accuracy > *acc) {
            best = Some((dev_accuracy, model.clone()));
            log.best_epoch = epoch;
        }
    }
    let model = best.map_or(model, |(_, m)| m);
    Ok((model, log))
}
