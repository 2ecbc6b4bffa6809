use crate::corpus::PairBatch;
use crate::error::{Error, Result};

/// A probability distribution over the candidate slots of one window.
#[derive(Clone, Debug, PartialEq)]
pub struct Scores {
    pub probs: Vec<f64>,
}

impl Scores {
    /// Softmax of `logits` restricted to valid slots; invalid slots get 0.
    pub fn from_logits(logits: &[f64], valid_mask: &[bool]) -> Result<Self> {
        if logits.len() != valid_mask.len() {
            return Err(Error::Shape(format!(
                "{} logits for {} slots",
                logits.len(),
                valid_mask.len()
            )));
        }
        let max = logits
            .iter()
            .zip(valid_mask)
            .filter(|(_, &v)| v)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::NoValidSlots);
        }
        let mut probs: Vec<f64> = logits
            .iter()
            .zip(valid_mask)
            .map(|(&l, &v)| if v { (l - max).exp() } else { 0.0 })
            .collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        Ok(Scores { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Highest-probability valid slot; ties go to the most recent candidate.
    pub fn argmax(&self, batch: &PairBatch) -> usize {
        best_slot(batch, |s| self.probs[s])
    }
}

/// Slot maximizing `key` over valid slots, visiting slots in recency order so
/// the most recent candidate wins ties.
pub(crate) fn best_slot(batch: &PairBatch, key: impl Fn(usize) -> f64) -> usize {
    let mut best = None;
    for slot in batch.recency_order() {
        let k = key(slot);
        match best {
            Some((_, bk)) if k <= bk => {}
            _ => best = Some((slot, k)),
        }
    }
    best.map_or(0, |(s, _)| s)
}
