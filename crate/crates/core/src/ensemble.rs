//! Combining several trained rankers: parameter averaging, probability
//! averaging and argmax voting.

use std::str::FromStr;

use crate::corpus::PairBatch;
use crate::error::{Error, Result};
use crate::inference::{decode_channel, ChannelPrediction};
use crate::ranker::{best_slot, Example, Model, ParamSet, Ranker, Scores};
use crate::tensor::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    ModelAvg,
    ProbAvg,
    Vote,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model-avg" => Ok(Strategy::ModelAvg),
            "prob-avg" => Ok(Strategy::ProbAvg),
            "vote" => Ok(Strategy::Vote),
            other => Err(Error::Config(format!(
                "unknown ensemble strategy {other:?} (expected model-avg, prob-avg or vote)"
            ))),
        }
    }
}

/// Mean of the values, summed in sorted order so the result does not
/// depend on the order of the inputs.
fn order_free_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Element-wise mean of every tensor.
pub fn model_avg(params: &[&ParamSet]) -> Result<ParamSet> {
    let first = *params.first().ok_or_else(|| Error::Config("model averaging needs at least one model".into()))?;
    for p in &params[1..] {
        first.check_compatible(p)?;
    }
    let mut out = first.clone();
    let mut column = vec![0.0; params.len()];
    for t in 0..first.len() {
        let tensor: &mut Mat = out.tensor_mut(t);
        for j in 0..tensor.len() {
            for (slot, p) in column.iter_mut().zip(params) {
                *slot = p.tensor(t).data[j];
            }
            tensor.data[j] = order_free_mean(&mut column);
        }
    }
    Ok(out)
}

/// Averages whole models, which must share kind and configuration.
pub fn average_models(models: &[Model]) -> Result<Model> {
    let first = models.first().ok_or_else(|| Error::Config("model averaging needs at least one model".into()))?;
    for m in &models[1..] {
        if m.kind() != first.kind() {
            return Err(Error::Config(format!(
                "cannot average a {} model with a {} model",
                first.kind().as_str(),
                m.kind().as_str()
            )));
        }
    }
    let params: Vec<&ParamSet> = models.iter().map(Ranker::params).collect();
    first.with_params(model_avg(&params)?)
}

/// Element-wise mean of probability vectors.
pub fn prob_avg(scores: &[Scores]) -> Result<Scores> {
    let first = scores.first().ok_or_else(|| Error::Config("probability averaging needs at least one model".into()))?;
    if let Some(bad) = scores.iter().find(|s| s.len() != first.len()) {
        return Err(Error::Shape(format!("{} slots vs {} slots", first.len(), bad.len())));
    }
    let mut column = vec![0.0; scores.len()];
    let probs = (0..first.len())
        .map(|i| {
            for (slot, s) in column.iter_mut().zip(scores) {
                *slot = s.probs[i];
            }
            order_free_mean(&mut column)
        })
        .collect();
    Ok(Scores { probs })
}

/// Slot with the most votes; ties go to the highest mean probability and
/// then to the most recent candidate.
pub fn vote(argmaxes: &[usize], scores: &[Scores], batch: &PairBatch) -> Result<usize> {
    if argmaxes.is_empty() {
        return Err(Error::Config("voting needs at least one voter".into()));
    }
    let slots = batch.num_slots();
    let mut votes = vec![0usize; slots];
    for &a in argmaxes {
        if a >= slots || !batch.valid_mask[a] {
            return Err(Error::InvalidParentSlot(a));
        }
        votes[a] += 1;
    }
    let top = *votes.iter().max().expect("at least one slot");
    let mean = if scores.is_empty() {
        Scores { probs: vec![0.0; slots] }
    } else {
        prob_avg(scores)?
    };
    if mean.len() != slots {
        return Err(Error::Shape(format!("{} scores for {slots} slots", mean.len())));
    }
    Ok(best_slot(batch, |s| if votes[s] == top { mean.probs[s] } else { f64::NEG_INFINITY }))
}

/// Chosen slot for every window under `strategy`.
pub fn ensemble_slots(models: &[Model], strategy: Strategy, examples: &[Example]) -> Result<Vec<usize>> {
    if models.is_empty() {
        return Err(Error::Config("an ensemble needs at least one model".into()));
    }
    match strategy {
        Strategy::ModelAvg => {
            let avg = average_models(models)?;
            examples.iter().map(|e| Ok(avg.score(e)?.argmax(&e.batch))).collect()
        }
        Strategy::ProbAvg => examples
            .iter()
            .map(|e| {
                let scores = models.iter().map(|m| m.score(e)).collect::<Result<Vec<_>>>()?;
                Ok(prob_avg(&scores)?.argmax(&e.batch))
            })
            .collect(),
        Strategy::Vote => examples
            .iter()
            .map(|e| {
                let scores = models.iter().map(|m| m.score(e)).collect::<Result<Vec<_>>>()?;
                let argmaxes: Vec<usize> = scores.iter().map(|s| s.argmax(&e.batch)).collect();
                vote(&argmaxes, &scores, &e.batch)
            })
            .collect(),
    }
}

/// Ensemble prediction for one channel's windows.
pub fn ensemble_predict(models: &[Model], strategy: Strategy, examples: &[Example]) -> Result<ChannelPrediction> {
    decode_channel(examples, &ensemble_slots(models, strategy, examples)?)
}
