//! In-domain masked-token and next-message pre-training of the pair
//! encoder.
//!
//! Positive pairs join a reply with its annotated parent; negatives join the
//! reply with a randomly drawn message. The masked-token head shares the
//! token embedding matrix.

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dialbert::{DialBert, Dropout};
use super::optim::Adam;
use super::params::ParamSet;
use super::{register_params, Ranker};
use crate::autograd::Tape;
use crate::corpus::{join_pair, Channel, EncodedChannel, Vocabulary, MASK, NUM_RESERVED};
use crate::error::{Error, Result};
use crate::tensor::Mat;

pub const MASK_FRACTION: f64 = 0.15;

/// Output heads used only during pre-training.
#[derive(Clone, Debug, PartialEq)]
pub struct PosttrainHeads {
    params: ParamSet,
}

impl PosttrainHeads {
    pub fn new(model: &DialBert, rng: &mut impl Rng) -> Self {
        let e = &model.config().encoder;
        let mut params = ParamSet::new();
        params.push("pretrain.mlm.bias", Mat::zeros(1, e.vocab_size));
        params.push("pretrain.nsp.weight", Mat::randn(e.width, 1, 0.02, rng));
        params.push("pretrain.nsp.bias", Mat::zeros(1, 1));
        PosttrainHeads { params }
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }
}

/// A pair sequence with some tokens corrupted for masked-token prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedPair {
    pub tokens: Vec<u32>,
    /// Corrupted positions, ascending.
    pub positions: Vec<usize>,
    /// Original ids at `positions`.
    pub targets: Vec<u32>,
}

/// Selects 15% of the non-reserved tokens (at least one when any exist);
/// each becomes `[MASK]` with probability 0.8, a random token with
/// probability 0.1, and stays unchanged otherwise.
pub fn mask_tokens(tokens: &[u32], vocab_size: usize, rng: &mut impl Rng) -> MaskedPair {
    let eligible: Vec<usize> = (0..tokens.len())
        .filter(|&i| tokens[i] as usize >= NUM_RESERVED)
        .collect();
    let mut out = MaskedPair {
        tokens: tokens.to_vec(),
        positions: Vec::new(),
        targets: Vec::new(),
    };
    if eligible.is_empty() {
        return out;
    }
    let count = ((eligible.len() as f64 * MASK_FRACTION).round() as usize).max(1);
    let mut chosen: Vec<usize> = sample(rng, eligible.len(), count).into_iter().map(|i| eligible[i]).collect();
    chosen.sort_unstable();
    for &pos in &chosen {
        let roll: f64 = rng.random();
        if roll < 0.8 {
            out.tokens[pos] = MASK;
        } else if roll < 0.9 && vocab_size > NUM_RESERVED {
            out.tokens[pos] = rng.random_range(NUM_RESERVED as u32..vocab_size as u32);
        }
        out.targets.push(tokens[pos]);
    }
    out.positions = chosen;
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PosttrainLoss {
    pub total: f64,
    pub mlm: f64,
    pub nsp: f64,
}

/// Losses and gradients (model tensors, head tensors) for one pair.
/// `is_next` marks a genuine reply pair.
pub fn posttrain_step(
    model: &DialBert,
    heads: &PosttrainHeads,
    pair: &MaskedPair,
    is_next: bool,
    rng: Option<&mut dyn RngCore>,
) -> Result<(PosttrainLoss, Vec<Mat>, Vec<Mat>)> {
    let mut tape = Tape::new();
    let vars = register_params(&mut tape, model.params());
    let head_vars = register_params(&mut tape, &heads.params);
    let mut drop = rng.map(|rng| Dropout {
        rate: model.config().encoder.dropout,
        rng,
    });
    let (hidden, _) = model.encode_sequences(&mut tape, &vars, &[&pair.tokens], &mut drop)?;

    let cls = tape.select_rows(hidden, vec![0]);
    let z = tape.matmul(cls, head_vars[1]);
    let z = tape.add(z, head_vars[2]);
    let signed = tape.scale(z, if is_next { -1.0 } else { 1.0 });
    let nsp = tape.softplus(signed);

    let (total, mlm) = if pair.positions.is_empty() {
        log::warn!("pair without masked positions; masked-token loss is zero");
        (nsp, None)
    } else {
        let rows = tape.select_rows(hidden, pair.positions.clone());
        let logits = tape.matmul_bt(rows, vars[model.token_embedding_index()]);
        let logits = tape.add_row(logits, head_vars[0]);
        let targets = pair.targets.iter().map(|&t| t as usize).collect();
        let mlm = tape.cross_entropy_rows(logits, targets);
        (tape.add(mlm, nsp), Some(mlm))
    };
    let loss = PosttrainLoss {
        total: tape.scalar(total),
        mlm: mlm.map_or(0.0, |v| tape.scalar(v)),
        nsp: tape.scalar(nsp),
    };
    if !loss.total.is_finite() {
        return Err(Error::NonFiniteLoss { batch: 0 });
    }
    let mut grads = tape.backward(total);
    let collect = |grads: &mut crate::autograd::Gradients, vars: &[crate::autograd::Var], params: &ParamSet| {
        vars.iter()
            .zip(params.tensors())
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Mat::zeros(t.rows, t.cols)))
            .collect::<Vec<_>>()
    };
    let model_grads = collect(&mut grads, &vars, model.params());
    let head_grads = collect(&mut grads, &head_vars, &heads.params);
    Ok((loss, model_grads, head_grads))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosttrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PosttrainConfig {
    fn default() -> Self {
        PosttrainConfig {
            epochs: 1,
            learning_rate: 1e-3,
            batch_size: 4,
            seed: 0,
        }
    }
}

/// Pre-trains the encoder on reply pairs from `channels`; returns the mean
/// losses per epoch.
pub fn posttrain(
    model: &mut DialBert,
    heads: &mut PosttrainHeads,
    channels: &[Channel],
    vocab: &Vocabulary,
    config: &PosttrainConfig,
) -> Result<Vec<PosttrainLoss>> {
    let max_len = model.config().encoder.max_seq_len;
    let encoded: Vec<EncodedChannel> = channels.iter().map(|c| EncodedChannel::new(c, vocab, max_len)).collect();
    let replies: Vec<(usize, usize, usize)> = channels
        .iter()
        .enumerate()
        .flat_map(|(ci, ch)| {
            ch.messages
                .iter()
                .filter(|m| !m.is_self_linked())
                .map(move |m| (ci, m.index, m.gold_parent))
        })
        .collect();
    if replies.is_empty() {
        return Err(Error::EmptyCorpus("no reply pairs for pre-training"));
    }
    let all: Vec<(usize, usize)> = channels
        .iter()
        .enumerate()
        .flat_map(|(ci, ch)| (0..ch.len()).map(move |i| (ci, i)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model_opt = Adam::new(model.params(), config.learning_rate, 0.9, 0.999, 1e-8);
    let mut head_opt = Adam::new(&heads.params, config.learning_rate, 0.9, 0.999, 1e-8);
    let vocab_size = model.config().encoder.vocab_size;
    let use_dropout = model.config().encoder.dropout > 0.0;
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut order: Vec<usize> = (0..replies.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut sum = PosttrainLoss::default();
        for chunk in order.chunks(config.batch_size.max(1)) {
            let mut model_grads = model.params().zeros_like();
            let mut head_grads = heads.params.zeros_like();
            for &r in chunk {
                let (ci, child, parent) = replies[r];
                let is_next = rng.random::<bool>();
                let (oc, other) = if is_next {
                    (ci, parent)
                } else {
                    loop {
                        let pick = all[rng.random_range(0..all.len())];
                        if pick != (ci, parent) && pick != (ci, child) {
                            break pick;
                        }
                    }
                };
                let tokens = join_pair(&encoded[ci].ids[child], &encoded[oc].ids[other], max_len);
                let masked = mask_tokens(&tokens, vocab_size, &mut rng);
                let mut drop_rng = ChaCha8Rng::seed_from_u64(rng.random());
                let drop: Option<&mut dyn RngCore> = if use_dropout { Some(&mut drop_rng) } else { None };
                let (loss, mg, hg) = posttrain_step(model, heads, &masked, is_next, drop)?;
                for (a, g) in model_grads.iter_mut().zip(&mg) {
                    a.add_assign(g);
                }
                for (a, g) in head_grads.iter_mut().zip(&hg) {
                    a.add_assign(g);
                }
                sum.total += loss.total;
                sum.mlm += loss.mlm;
                sum.nsp += loss.nsp;
            }
            let scale = 1.0 / chunk.len() as f64;
            model_grads.iter_mut().chain(head_grads.iter_mut()).for_each(|g| g.scale(scale));
            model_opt.step(model.params_mut(), &model_grads);
            head_opt.step(&mut heads.params, &head_grads);
        }
        let n = replies.len() as f64;
        let epoch = PosttrainLoss {
            total: sum.total / n,
            mlm: sum.mlm / n,
            nsp: sum.nsp / n,
        };
        log::info!("post-training: loss {:.4} (mlm {:.4}, nsp {:.4})", epoch.total, epoch.mlm, epoch.nsp);
        history.push(epoch);
    }
    Ok(history)
}
