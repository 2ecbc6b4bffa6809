//! Hand-engineered pair features for the linear and feedforward rankers
//! and the feature-augmented model variant.
//!
//! The schema covers three families: distance in position and time, message
//! type and addressing, and lexical overlap. Per-corpus constants such as
//! the log year carry no signal inside a single channel and are replaced by
//! a short-range recency flag.

use std::collections::HashSet;

use crate::corpus::{Channel, PairBatch};
use crate::error::{Error, Result};

pub const NUM_FEATURES: usize = 15;

/// Messages at most this far back set the recency flag.
pub const RECENT_WINDOW: usize = 8;

pub const FEATURE_SCHEMA: [(&str, &str); NUM_FEATURES] = [
    ("position_gap", "log(1 + |target index - candidate index|)"),
    ("time_gap", "log(1 + |target minutes - candidate minutes|); missing stamps carry the last known time forward"),
    ("same_speaker", "1 if both messages have the same speaker"),
    ("target_addresses_candidate", "1 if the target's addressed nick is the candidate's speaker"),
    ("candidate_addresses_target", "1 if the candidate's addressed nick is the target's speaker"),
    ("either_system", "1 if either message is a system line"),
    ("target_system", "1 if the target is a system line"),
    ("candidate_system", "1 if the candidate is a system line"),
    ("word_jaccard", "Jaccard overlap of the two body word sets"),
    ("candidate_length", "log(1 + candidate body word count)"),
    ("target_length", "log(1 + target body word count)"),
    ("target_has_address", "1 if the target addresses some nick"),
    ("candidate_has_address", "1 if the candidate addresses some nick"),
    ("self_pair", "1 if the candidate is the target itself"),
    ("recent_candidate", "1 if the candidate precedes the target by 1 to 8 messages"),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; NUM_FEATURES],
}

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector {
            values: [0.0; NUM_FEATURES],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_SCHEMA
            .iter()
            .position(|(n, _)| *n == name)
            .map(|i| self.values[i])
    }
}

/// The schema as a text document, one `index name description` line each.
pub fn schema_text() -> String {
    FEATURE_SCHEMA
        .iter()
        .enumerate()
        .map(|(i, (name, desc))| format!("{i}\t{name}\t{desc}\n"))
        .collect()
}

fn effective_time(channel: &Channel, index: usize) -> u32 {
    channel.messages[..=index]
        .iter()
        .rev()
        .find_map(|m| m.time)
        .unwrap_or(0)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn addresses(nick: &Option<String>, speaker: &str) -> bool {
    nick.as_deref().is_some_and(|n| n.eq_ignore_ascii_case(speaker))
}

fn jaccard(a: &[String], b: &[String]) -> f64 {
    let a: HashSet<&str> = a.iter().map(String::as_str).collect();
    let b: HashSet<&str> = b.iter().map(String::as_str).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

pub fn extract_pair_features(channel: &Channel, target_index: usize, candidate_index: usize) -> Result<FeatureVector> {
    let len = channel.len();
    for index in [target_index, candidate_index] {
        if index >= len {
            return Err(Error::InvalidIndex { index, len });
        }
    }
    let target = &channel.messages[target_index];
    let candidate = &channel.messages[candidate_index];
    let gap = target_index.abs_diff(candidate_index);
    let time_gap = effective_time(channel, target_index).abs_diff(effective_time(channel, candidate_index));
    let t_body = target.body_words();
    let c_body = candidate.body_words();

    let values = [
        (gap as f64).ln_1p(),
        f64::from(time_gap).ln_1p(),
        flag(target.speaker == candidate.speaker),
        flag(addresses(&target.target_nick, &candidate.speaker)),
        flag(addresses(&candidate.target_nick, &target.speaker)),
        flag(target.is_system || candidate.is_system),
        flag(target.is_system),
        flag(candidate.is_system),
        jaccard(t_body, c_body),
        (c_body.len() as f64).ln_1p(),
        (t_body.len() as f64).ln_1p(),
        flag(target.target_nick.is_some()),
        flag(candidate.target_nick.is_some()),
        flag(gap == 0),
        flag(candidate_index < target_index && gap <= RECENT_WINDOW),
    ];
    Ok(FeatureVector { values })
}

/// One feature row per slot; padded slots get zero rows.
pub fn featurize_batch(channel: &Channel, batch: &PairBatch) -> Result<Vec<FeatureVector>> {
    batch
        .candidate_indices
        .iter()
        .map(|c| match c {
            Some(i) => extract_pair_features(channel, batch.target_index, *i),
            None => Ok(FeatureVector::zeros()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_context_window, build_vocab, EncodedChannel, WindowConfig};
    use std::path::Path;

    const SAMPLE: &str = "\
1000\t1000\t[03:04] Amaranth: @cliche American
1001\t1001\t=== welshbyte  has joined #ubuntu
1002\t1002\t[03:04] e-sin: no i just want the normal screensavers
1002\t1003\t[03:04] e-sin: i have a 16mb video card
1003\t1004\t[03:05] jobezone: @e-sin then it's xscreensaver
1004\t1005\t[03:07] e-sin: zzz qqq
";

    fn sample() -> Channel {
        Channel::parse("s", SAMPLE, Path::new("s")).unwrap()
    }

    #[test]
    fn self_pair() {
        let ch = sample();
        let f = extract_pair_features(&ch, 3, 3).unwrap();
        assert_eq!(f.get("position_gap"), Some(0.0));
        assert_eq!(f.get("same_speaker"), Some(1.0));
        assert_eq!(f.get("self_pair"), Some(1.0));
        assert_eq!(f.get("word_jaccard"), Some(1.0));
        assert_eq!(f.get("recent_candidate"), Some(0.0));
    }

    #[test]
    fn same_speaker_same_minute() {
        let ch = sample();
        let f = extract_pair_features(&ch, 3, 2).unwrap();
        assert_eq!(f.get("same_speaker"), Some(1.0));
        assert_eq!(f.get("position_gap"), Some(1f64.ln_1p()));
        assert_eq!(f.get("time_gap"), Some(0.0));
        let far = extract_pair_features(&ch, 5, 2).unwrap();
        assert_eq!(far.get("position_gap"), Some(3f64.ln_1p()));
        assert_eq!(far.get("time_gap"), Some(3f64.ln_1p()));
    }

    #[test]
    fn addressing_and_system_flags() {
        let ch = sample();
        let f = extract_pair_features(&ch, 4, 3).unwrap();
        assert_eq!(f.get("target_addresses_candidate"), Some(1.0));
        assert_eq!(f.get("candidate_addresses_target"), Some(0.0));
        assert_eq!(f.get("target_has_address"), Some(1.0));
        let g = extract_pair_features(&ch, 2, 1).unwrap();
        assert_eq!(g.get("either_system"), Some(1.0));
        assert_eq!(g.get("candidate_system"), Some(1.0));
        assert_eq!(g.get("target_system"), Some(0.0));
        // the join has no stamp and inherits 03:04
        assert_eq!(g.get("time_gap"), Some(0.0));
    }

    #[test]
    fn disjoint_words() {
        let ch = sample();
        let f = extract_pair_features(&ch, 5, 0).unwrap();
        assert_eq!(f.get("word_jaccard"), Some(0.0));
    }

    #[test]
    fn invalid_index() {
        assert!(extract_pair_features(&sample(), 9, 0).is_err());
    }

    #[test]
    fn batch_padding() {
        let ch = sample();
        let vocab = build_vocab(std::slice::from_ref(&ch), 1).unwrap();
        let enc = EncodedChannel::new(&ch, &vocab, 100);
        let b = build_context_window(&ch, &enc, 3, &WindowConfig::default()).unwrap();
        let rows = featurize_batch(&ch, &b).unwrap();
        assert_eq!(rows.len(), 50);
        let nonzero = rows.iter().filter(|r| r.values.iter().any(|&v| v != 0.0)).count();
        assert_eq!(nonzero, 4);
        assert_eq!(rows[0], extract_pair_features(&ch, 3, 3).unwrap());
    }

    #[test]
    fn schema_lists_every_feature() {
        assert_eq!(schema_text().lines().count(), NUM_FEATURES);
    }
}
