//! Trainable parent rankers, their loss, optimizer and training loop.

mod baseline;
mod checkpoint;
mod config;
mod dialbert;
mod gradcheck;
mod loss;
mod optim;
mod params;
mod posttrain;
mod scores;
mod train;


use rand::RngCore;

pub use baseline::{FeedforwardRanker, LinearRanker, FEEDFORWARD_HIDDEN};
pub use checkpoint::{load_checkpoint, save_checkpoint, Model, ModelKind};
pub use config::{DialBertConfig, EncoderConfig, TrainConfig};
pub use dialbert::DialBert;
pub use gradcheck::{grad_check, grad_check_model, GradCheckReport};
pub use loss::{loss, loss_graph, LossValues};
pub use optim::Adam;
pub use params::ParamSet;
pub use posttrain::{mask_tokens, posttrain, posttrain_step, MaskedPair, PosttrainConfig, PosttrainHeads, PosttrainLoss};
pub use scores::Scores;
pub use train::{accuracy, build_examples, train, EpochRecord, TrainLog};

pub(crate) use scores::best_slot;

use crate::autograd::{Tape, Var};
use crate::corpus::PairBatch;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::tensor::Mat;

/// One scoring unit: a context window and, for feature-based models, one
/// feature row per slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub batch: PairBatch,
    pub features: Option<Vec<FeatureVector>>,
}

/// Registers every tensor of `params` as a leaf; `vars[i]` is tensor `i`.
pub fn register_params<'a>(tape: &mut Tape<'a>, params: &'a ParamSet) -> Vec<Var> {
    params.tensors().iter().map(|t| tape.param(t)).collect()
}

/// A model producing a parent distribution over the slots of a window.
pub trait Ranker: Clone + Send + Sync {
    fn params(&self) -> &ParamSet;

    fn params_mut(&mut self) -> &mut ParamSet;

    fn needs_features(&self) -> bool;

    fn dropout_rate(&self) -> f64 {
        0.0
    }

    /// Appends the scoring graph and returns the `T x 1` probability node.
    /// Dropout is active only when `rng` is given.
    fn probs_graph<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        vars: &[Var],
        example: &Example,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Var>;

    /// Inference-mode scores.
    fn score(&self, example: &Example) -> Result<Scores> {
        let mut tape = Tape::new();
        let vars = register_params(&mut tape, self.params());
        let p = self.probs_graph(&mut tape, &vars, example, None)?;
        Ok(Scores {
            probs: tape.value(p).data.clone(),
        })
    }
}

/// Loss and per-tensor gradients for one window.
pub fn forward_backward<R: Ranker>(
    model: &R,
    example: &Example,
    config: &TrainConfig,
    rng: Option<&mut dyn RngCore>,
    batch_id: usize,
) -> Result<(LossValues, Vec<Mat>)> {
    let batch = &example.batch;
    let parent = batch
        .parent_slot
        .ok_or_else(|| Error::Config(format!("target {} has its parent outside the window", batch.target_index)))?;
    let mut tape = Tape::new();
    let vars = register_params(&mut tape, model.params());
    let probs = model.probs_graph(&mut tape, &vars, example, rng)?;
    let (total, ce, cv) = loss_graph(
        &mut tape,
        probs,
        &batch.valid_mask,
        parent,
        &batch.conv_labels,
        config.alpha,
        config.prob_floor,
    )?;
    let values = LossValues {
        total: tape.scalar(total),
        ce: tape.scalar(ce),
        cv: tape.scalar(cv),
    };
    if !values.total.is_finite() {
        return Err(Error::NonFiniteLoss { batch: batch_id });
    }
    let mut grads = tape.backward(total);
    let out = vars
        .iter()
        .zip(model.params().tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Mat::zeros(t.rows, t.cols)))
        .collect();
    Ok((values, out))
}
