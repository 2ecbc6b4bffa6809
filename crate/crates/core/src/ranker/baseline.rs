//! Feature-only rankers: a linear scorer and a one-hidden-layer network.

use rand::{Rng, RngCore};

use super::params::ParamSet;
use super::{Example, Ranker, Scores};
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, NUM_FEATURES};
use crate::tensor::Mat;

pub const FEEDFORWARD_HIDDEN: usize = 64;

fn feature_matrix(features: &[FeatureVector]) -> Mat {
    let rows: Vec<Vec<f64>> = features.iter().map(|f| f.values.to_vec()).collect();
    Mat::from_rows(&rows)
}

fn example_features(example: &Example) -> Result<&[FeatureVector]> {
    let f = example
        .features
        .as_deref()
        .ok_or_else(|| Error::Config("feature ranker needs pair features".into()))?;
    if f.len() != example.batch.num_slots() {
        return Err(Error::SchemaMismatch {
            expected: example.batch.num_slots(),
            actual: f.len(),
        });
    }
    Ok(f)
}

/// `logit_i = w . phi_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRanker {
    params: ParamSet,
}

impl LinearRanker {
    pub fn zeros() -> Self {
        Self::from_weights(vec![0.0; NUM_FEATURES]).expect("schema width")
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.len() != NUM_FEATURES {
            return Err(Error::SchemaMismatch {
                expected: NUM_FEATURES,
                actual: weights.len(),
            });
        }
        let mut params = ParamSet::new();
        params.push("linear.weight", Mat::column(weights));
        Ok(LinearRanker { params })
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        Self::zeros().params.check_compatible(&params)?;
        Ok(LinearRanker { params })
    }

    pub fn weights(&self) -> &[f64] {
        &self.params.tensor(0).data
    }

    /// Masked softmax of the linear logits.
    pub fn rank(&self, features: &[FeatureVector], valid_mask: &[bool]) -> Result<Scores> {
        let w = self.weights();
        let logits: Vec<f64> = features
            .iter()
            .map(|f| f.values.iter().zip(w).map(|(a, b)| a * b).sum())
            .collect();
        Scores::from_logits(&logits, valid_mask)
    }
}

impl Ranker for LinearRanker {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn needs_features(&self) -> bool {
        true
    }

    fn probs_graph<'a>(&'a self, tape: &mut Tape<'a>, vars: &[Var], example: &Example, _rng: Option<&mut dyn RngCore>) -> Result<Var> {
        let phi = tape.constant(feature_matrix(example_features(example)?));
        let logits = tape.matmul(phi, vars[0]);
        Ok(tape.masked_softmax(logits, example.batch.valid_mask.clone()))
    }
}

/// `logit_i = v . tanh(W phi_i + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedforwardRanker {
    params: ParamSet,
}

impl FeedforwardRanker {
    pub fn new(rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        params.push(
            "feedforward.hidden.weight",
            Mat::randn(NUM_FEATURES, FEEDFORWARD_HIDDEN, 1.0 / (NUM_FEATURES as f64).sqrt(), rng),
        );
        params.push("feedforward.hidden.bias", Mat::zeros(1, FEEDFORWARD_HIDDEN));
        params.push(
            "feedforward.output.weight",
            Mat::randn(FEEDFORWARD_HIDDEN, 1, 1.0 / (FEEDFORWARD_HIDDEN as f64).sqrt(), rng),
        );
        FeedforwardRanker { params }
    }

    pub fn zeros() -> Self {
        let mut params = ParamSet::new();
        params.push("feedforward.hidden.weight", Mat::zeros(NUM_FEATURES, FEEDFORWARD_HIDDEN));
        params.push("feedforward.hidden.bias", Mat::zeros(1, FEEDFORWARD_HIDDEN));
        params.push("feedforward.output.weight", Mat::zeros(FEEDFORWARD_HIDDEN, 1));
        FeedforwardRanker { params }
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        Self::zeros().params.check_compatible(&params)?;
        Ok(FeedforwardRanker { params })
    }

    pub fn rank(&self, features: &[FeatureVector], valid_mask: &[bool]) -> Result<Scores> {
        let (w, b, v) = (self.params.tensor(0), self.params.tensor(1), self.params.tensor(2));
        let logits: Vec<f64> = features
            .iter()
            .map(|f| {
                (0..FEEDFORWARD_HIDDEN)
                    .map(|h| {
                        let pre: f64 = (0..NUM_FEATURES).map(|i| f.values[i] * w.at(i, h)).sum::<f64>() + b.data[h];
                        pre.tanh() * v.data[h]
                    })
                    .sum()
            })
            .collect();
        Scores::from_logits(&logits, valid_mask)
    }
}

impl Ranker for FeedforwardRanker {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn needs_features(&self) -> bool {
        true
    }

    fn probs_graph<'a>(&'a self, tape: &mut Tape<'a>, vars: &[Var], example: &Example, _rng: Option<&mut dyn RngCore>) -> Result<Var> {
        let phi = tape.constant(feature_matrix(example_features(example)?));
        let h = tape.matmul(phi, vars[0]);
        let h = tape.add_row(h, vars[1]);
        let h = tape.tanh(h);
        let logits = tape.matmul(h, vars[2]);
        Ok(tape.masked_softmax(logits, example.batch.valid_mask.clone()))
    }
}
