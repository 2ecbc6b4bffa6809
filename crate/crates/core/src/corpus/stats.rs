use std::collections::{BTreeMap, HashSet};
use std::fmt;

use super::channel::Channel;

/// Message, conversation and speaker counts for one data split, plus the
/// distribution of reply distances.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusStats {
    pub channels: usize,
    pub messages: usize,
    pub conversations: usize,
    pub speakers: usize,
    pub system_messages: usize,
    /// Reply distance (target index minus parent index) to count; self
    /// links are excluded.
    pub distance_histogram: BTreeMap<usize, usize>,
    /// Replies whose parent precedes the start of the file.
    pub unresolved_parents: usize,
}

impl CorpusStats {
    pub fn compute(channels: &[Channel]) -> Self {
        let mut stats = CorpusStats {
            channels: channels.len(),
            ..CorpusStats::default()
        };
        let mut speakers = HashSet::new();
        for ch in channels {
            stats.messages += ch.len();
            stats.conversations += ch.gold_clusters.num_clusters();
            for m in &ch.messages {
                speakers.insert(m.speaker.as_str());
                stats.system_messages += usize::from(m.is_system);
                if m.outside_parent.is_some() {
                    stats.unresolved_parents += 1;
                } else if !m.is_self_linked() {
                    *stats.distance_histogram.entry(m.index - m.gold_parent).or_default() += 1;
                }
            }
        }
        stats.speakers = speakers.len();
        stats
    }

    pub fn replies(&self) -> usize {
        self.distance_histogram.values().sum::<usize>() + self.unresolved_parents
    }

    /// Fraction of replies whose parent falls inside a window of
    /// `context_range` slots (distance below `context_range`).
    pub fn fraction_within(&self, context_range: usize) -> f64 {
        let total = self.replies();
        if total == 0 {
            return 1.0;
        }
        let within: usize = self.distance_histogram.range(..context_range).map(|(_, c)| c).sum();
        within as f64 / total as f64
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "channels={}", self.channels)?;
        writeln!(f, "messages={}", self.messages)?;
        writeln!(f, "conversations={}", self.conversations)?;
        writeln!(f, "speakers={}", self.speakers)?;
        writeln!(f, "system_messages={}", self.system_messages)?;
        writeln!(f, "replies={}", self.replies())?;
        write!(f, "unresolved_parents={}", self.unresolved_parents)
    }
}
