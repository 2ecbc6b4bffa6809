//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamSet;
use super::{forward_backward, register_params, Example, Ranker, TrainConfig};
use crate::autograd::Tape;
use crate::error::Result;
use crate::ranker::loss_graph;
use crate::tensor::Mat;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    /// Tensor name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Compares `analytic` against central differences on a random sample of
/// `sample_fraction` of the coordinates of every tensor (at least one per
/// tensor). With `D(h) = (f(x + h) - f(x - h)) / (2h)` the numeric value is
/// `(4 D(eps/2) - D(eps)) / 3`, which cancels the `h^2` term so `eps` can
/// stay large enough for rounding not to swamp small gradients. Relative
/// error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(
    params: &ParamSet,
    analytic: &[Mat],
    mut objective: impl FnMut(&ParamSet) -> f64,
    eps: f64,
    sample_fraction: f64,
    seed: u64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        coordinates_checked: 0,
        worst: None,
    };
    for t in 0..params.len() {
        let len = params.tensor(t).len();
        if len == 0 {
            continue;
        }
        let count = ((len as f64 * sample_fraction).ceil() as usize).clamp(1, len);
        for j in sample(&mut rng, len, count) {
            let original = params.tensor(t).data[j];
            let mut central = |h: f64| {
                probe.tensor_mut(t).data[j] = original + h;
                let plus = objective(&probe);
                probe.tensor_mut(t).data[j] = original - h;
                let minus = objective(&probe);
                probe.tensor_mut(t).data[j] = original;
                (plus - minus) / (2.0 * h)
            };
            let numeric = (4.0 * central(eps / 2.0) - central(eps)) / 3.0;
            let a = analytic[t].data[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.coordinates_checked += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((params.name(t).to_string(), j));
            }
        }
    }
    report
}

/// Gradient check of the full training loss of `model` on one window, with
/// dropout disabled.
pub fn grad_check_model<R: Ranker>(
    model: &R,
    example: &Example,
    config: &TrainConfig,
    eps: f64,
    sample_fraction: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, analytic) = forward_backward(model, example, config, None, 0)?;
    let parent = example.batch.parent_slot.expect("forward_backward checked the parent");
    let mut probe = model.clone();
    let objective = |p: &ParamSet| {
        *probe.params_mut() = p.clone();
        let mut tape = Tape::new();
        let vars = register_params(&mut tape, probe.params());
        let probs = probe
            .probs_graph(&mut tape, &vars, example, None)
            .expect("forward pass succeeded once already");
        let (total, _, _) = loss_graph(
            &mut tape,
            probs,
            &example.batch.valid_mask,
            parent,
            &example.batch.conv_labels,
            config.alpha,
            config.prob_floor,
        )
        .expect("parent slot checked");
        tape.scalar(total)
    };
    Ok(grad_check(model.params(), &analytic, objective, eps, sample_fraction, seed))
}
