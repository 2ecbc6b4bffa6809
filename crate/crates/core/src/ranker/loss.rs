//! Parent cross-entropy plus the weighted conversation loss.

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValues {
    pub total: f64,
    /// `-log P[parent]`.
    pub ce: f64,
    /// `-(1/T) sum_i y_i log P_i` over valid slots.
    pub cv: f64,
}

fn check_parent(parent_slot: usize, valid_mask: &[bool]) -> Result<()> {
    if valid_mask.get(parent_slot).copied().unwrap_or(false) {
        Ok(())
    } else {
        Err(Error::InvalidParentSlot(parent_slot))
    }
}

/// Evaluates the loss on a probability vector. `T` is the slot count.
pub fn loss(
    probs: &[f64],
    valid_mask: &[bool],
    parent_slot: usize,
    conv_labels: &[bool],
    alpha: f64,
    floor: f64,
) -> Result<LossValues> {
    check_parent(parent_slot, valid_mask)?;
    let ce = -probs[parent_slot].max(floor).ln();
    let slots = probs.len() as f64;
    let cv = -probs
        .iter()
        .zip(valid_mask)
        .zip(conv_labels)
        .filter(|((_, &v), &y)| v && y)
        .map(|((&p, _), _)| p.max(floor).ln())
        .sum::<f64>()
        / slots;
    Ok(LossValues {
        total: ce + alpha * cv,
        ce,
        cv,
    })
}

/// Loss nodes on a tape: `(total, ce, cv)`.
pub fn loss_graph(
    tape: &mut Tape,
    probs: Var,
    valid_mask: &[bool],
    parent_slot: usize,
    conv_labels: &[bool],
    alpha: f64,
    floor: f64,
) -> Result<(Var, Var, Var)> {
    check_parent(parent_slot, valid_mask)?;
    let slots = valid_mask.len();
    let logp = tape.log_floor(probs, floor);
    let mut ce_w = vec![0.0; slots];
    ce_w[parent_slot] = -1.0;
    let ce = tape.weighted_sum(logp, ce_w);
    let cv_w = valid_mask
        .iter()
        .zip(conv_labels)
        .map(|(&v, &y)| if v && y { -1.0 / slots as f64 } else { 0.0 })
        .collect();
    let cv = tape.weighted_sum(logp, cv_w);
    let weighted = tape.scale(cv, alpha);
    let total = tape.add(ce, weighted);
    Ok((total, ce, cv))
}
