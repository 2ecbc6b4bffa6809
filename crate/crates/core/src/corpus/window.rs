//! Context windows: one target message paired with itself and its
//! preceding (and optionally following) messages.

use super::channel::Channel;
use super::vocab::{Vocabulary, CLS, SEP};
use crate::error::{Error, Result};

/// Each side of a pair keeps at least this many tokens when truncating.
pub const MIN_SIDE_TOKENS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowConfig {
    /// Candidate slots per target: the self pair plus `context_range - 1`
    /// preceding messages.
    pub context_range: usize,
    /// Extra slots for following messages.
    pub future: usize,
    pub max_seq_len: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            context_range: 50,
            future: 0,
            max_seq_len: 100,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.context_range == 0 {
            return Err(Error::Config("context range must be at least 1".into()));
        }
        if self.max_seq_len < 3 + 2 * MIN_SIDE_TOKENS {
            return Err(Error::Config(format!(
                "max sequence length must be at least {}",
                3 + 2 * MIN_SIDE_TOKENS
            )));
        }
        Ok(())
    }

    pub fn num_slots(&self) -> usize {
        self.context_range + self.future
    }
}

/// Token ids for every message of a channel, each truncated to
/// `max_seq_len`.
#[derive(Clone, Debug)]
pub struct EncodedChannel {
    pub ids: Vec<Vec<u32>>,
}

impl EncodedChannel {
    pub fn new(channel: &Channel, vocab: &Vocabulary, max_seq_len: usize) -> Self {
        let ids = channel
            .messages
            .iter()
            .map(|m| {
                let mut ids = vocab.encode(&m.words);
                ids.truncate(max_seq_len);
                ids
            })
            .collect();
        EncodedChannel { ids }
    }
}

/// All candidate pairs for one target message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairBatch {
    pub target_index: usize,
    /// `[CLS] target [SEP] candidate [SEP]` per slot; empty for padded slots.
    pub pair_tokens: Vec<Vec<u32>>,
    /// Channel index per slot; slot 0 is the target itself.
    pub candidate_indices: Vec<Option<usize>>,
    pub valid_mask: Vec<bool>,
    /// Slot holding the gold parent, `None` when it lies outside the window.
    pub parent_slot: Option<usize>,
    /// Whether each slot's candidate shares the target's gold conversation.
    /// Slot 0 is labelled true only when the target starts a conversation.
    pub conv_labels: Vec<bool>,
    /// Number of past slots (self pair included); future slots follow.
    pub context_range: usize,
}

impl PairBatch {
    pub fn num_slots(&self) -> usize {
        self.valid_mask.len()
    }

    pub fn num_valid(&self) -> usize {
        self.valid_mask.iter().filter(|&&v| v).count()
    }

    pub fn is_future_slot(&self, slot: usize) -> bool {
        slot >= self.context_range
    }

    /// Slot order used to break ties: nearest past candidate first, then
    /// future candidates by distance, and the self pair last.
    pub fn recency_order(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.context_range)
            .chain(self.context_range..self.num_slots())
            .chain(std::iter::once(0))
            .filter(|&s| self.valid_mask[s])
    }

    /// Rank of a slot in [`Self::recency_order`] (lower is more recent).
    pub fn recency_rank(&self, slot: usize) -> usize {
        if slot == 0 {
            usize::MAX
        } else {
            slot
        }
    }
}

/// Joins two token sequences as `[CLS] a [SEP] b [SEP]`, truncating the
/// candidate side before the target side.
pub fn join_pair(target: &[u32], candidate: &[u32], max_seq_len: usize) -> Vec<u32> {
    let budget = max_seq_len.saturating_sub(3);
    let mut t_len = target.len();
    let mut c_len = candidate.len();
    if t_len + c_len > budget {
        c_len = budget.saturating_sub(t_len).max(c_len.min(MIN_SIDE_TOKENS));
    }
    if t_len + c_len > budget {
        t_len = budget.saturating_sub(c_len).max(t_len.min(MIN_SIDE_TOKENS));
    }
    let mut out = Vec::with_capacity(t_len + c_len + 3);
    out.push(CLS);
    out.extend_from_slice(&target[..t_len]);
    out.push(SEP);
    out.extend_from_slice(&candidate[..c_len]);
    out.push(SEP);
    out
}

/// Builds the window for `target_index`: slot 0 is the self pair, slots
/// `1..T` hold the preceding messages newest first, and `future` further
/// slots hold the following messages in order.
pub fn build_context_window(
    channel: &Channel,
    encoded: &EncodedChannel,
    target_index: usize,
    config: &WindowConfig,
) -> Result<PairBatch> {
    config.validate()?;
    let n = channel.len();
    if target_index >= n {
        return Err(Error::InvalidIndex {
            index: target_index,
            len: n,
        });
    }
    let slots = config.num_slots();
    let mut candidate_indices = vec![None; slots];
    for (slot, c) in candidate_indices.iter_mut().enumerate().take(config.context_range) {
        *c = target_index.checked_sub(slot);
    }
    for k in 0..config.future {
        let idx = target_index + 1 + k;
        if idx < n {
            candidate_indices[config.context_range + k] = Some(idx);
        }
    }

    let target_ids = &encoded.ids[target_index];
    let pair_tokens = candidate_indices
        .iter()
        .map(|c| match c {
            Some(i) => join_pair(target_ids, &encoded.ids[*i], config.max_seq_len),
            None => Vec::new(),
        })
        .collect();

    let target = &channel.messages[target_index];
    let gold_parent = target.gold_parent;
    let parent_slot = if gold_parent == target_index {
        Some(0)
    } else {
        let distance = target_index - gold_parent;
        (distance < config.context_range).then_some(distance)
    };

    let clusters = &channel.gold_clusters;
    let own = clusters.cluster_of(target_index);
    let conv_labels = candidate_indices
        .iter()
        .enumerate()
        .map(|(slot, c)| match c {
            Some(_) if slot == 0 => target.is_self_linked(),
            Some(i) => clusters.cluster_of(*i) == own,
            None => false,
        })
        .collect();

    Ok(PairBatch {
        target_index,
        pair_tokens,
        valid_mask: candidate_indices.iter().map(Option::is_some).collect(),
        candidate_indices,
        parent_slot,
        conv_labels,
        context_range: config.context_range,
    })
}

/// Windows for every message of a channel.
pub fn build_channel_windows(
    channel: &Channel,
    encoded: &EncodedChannel,
    config: &WindowConfig,
) -> Result<Vec<PairBatch>> {
    (0..channel.len())
        .map(|t| build_context_window(channel, encoded, t, config))
        .collect()
}
