use super::graph::{build_clusters, Clustering, ReplyGraph};
use crate::corpus::{build_context_window, Channel, EncodedChannel, Vocabulary, WindowConfig};
use crate::error::{Error, Result};
use crate::features::featurize_batch;
use crate::ranker::{Example, Ranker};

/// Predicted reply graph of one channel and its conversations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelPrediction {
    pub graph: ReplyGraph,
    pub clustering: Clustering,
}

impl ChannelPrediction {
    pub fn from_graph(graph: ReplyGraph) -> Self {
        let clustering = build_clusters(&graph);
        ChannelPrediction { graph, clustering }
    }
}

/// Winning slot of one window.
pub fn predict_slot<R: Ranker>(model: &R, example: &Example) -> Result<usize> {
    Ok(model.score(example)?.argmax(&example.batch))
}

/// Channel position of the predicted parent of `target`. The target itself
/// means a new conversation; a later position means a future candidate won.
pub fn predict_parent<R: Ranker>(
    model: &R,
    channel: &Channel,
    vocab: &Vocabulary,
    target: usize,
    window: &WindowConfig,
) -> Result<usize> {
    let encoded = EncodedChannel::new(channel, vocab, window.max_seq_len);
    let example = channel_example(channel, &encoded, target, window, model.needs_features())?;
    let slot = predict_slot(model, &example)?;
    Ok(slot_position(&example, slot))
}

fn channel_example(
    channel: &Channel,
    encoded: &EncodedChannel,
    target: usize,
    window: &WindowConfig,
    with_features: bool,
) -> Result<Example> {
    let batch = build_context_window(channel, encoded, target, window)?;
    let features = if with_features {
        Some(featurize_batch(channel, &batch)?)
    } else {
        None
    };
    Ok(Example { batch, features })
}

fn slot_position(example: &Example, slot: usize) -> usize {
    example.batch.candidate_indices[slot].expect("argmax only returns valid slots")
}

/// Turns per-message choices into a reply graph. A message choosing a later
/// message starts a conversation, and the later message adopts it as parent
/// unless it already links to an earlier message itself.
pub fn links_to_graph(choices: &[usize]) -> Result<ReplyGraph> {
    let n = choices.len();
    let mut pending: Vec<Option<usize>> = vec![None; n];
    let mut parent = Vec::with_capacity(n);
    for (i, &c) in choices.iter().enumerate() {
        if c >= n {
            return Err(Error::InvalidIndex { index: c, len: n });
        }
        if c > i {
            // the latest adopter wins
            pending[c] = Some(i);
            parent.push(i);
        } else if c == i {
            parent.push(pending[i].unwrap_or(i));
        } else {
            parent.push(c);
        }
    }
    ReplyGraph::new(parent)
}

/// Decodes a channel from the chosen slot of each of its windows.
pub fn decode_channel(examples: &[Example], slots: &[usize]) -> Result<ChannelPrediction> {
    if examples.len() != slots.len() {
        return Err(Error::Shape(format!("{} windows but {} choices", examples.len(), slots.len())));
    }
    let mut choices = Vec::with_capacity(slots.len());
    for (i, (e, &s)) in examples.iter().zip(slots).enumerate() {
        if e.batch.target_index != i {
            return Err(Error::Shape(format!("window {i} targets message {}", e.batch.target_index)));
        }
        if s >= e.batch.num_slots() || !e.batch.valid_mask[s] {
            return Err(Error::InvalidParentSlot(s));
        }
        choices.push(slot_position(e, s));
    }
    Ok(ChannelPrediction::from_graph(links_to_graph(&choices)?))
}

/// Predicts every message of a channel from its prepared windows.
pub fn predict_examples<R: Ranker>(model: &R, examples: &[Example]) -> Result<ChannelPrediction> {
    let slots = examples
        .iter()
        .map(|e| predict_slot(model, e))
        .collect::<Result<Vec<_>>>()?;
    decode_channel(examples, &slots)
}

/// Predicts parents for every message of `channel` in order and clusters
/// the result.
pub fn predict_channel<R: Ranker>(
    model: &R,
    channel: &Channel,
    vocab: &Vocabulary,
    window: &WindowConfig,
) -> Result<ChannelPrediction> {
    let encoded = EncodedChannel::new(channel, vocab, window.max_seq_len);
    let examples = (0..channel.len())
        .map(|t| channel_example(channel, &encoded, t, window, model.needs_features()))
        .collect::<Result<Vec<_>>>()?;
    predict_examples(model, &examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;
    use crate::features::NUM_FEATURES;
    use crate::ranker::LinearRanker;
    use std::path::Path;

    const SAMPLE: &str = "\
0\t0\t[10:00] ann: printer driver broken
1\t1\t[10:00] bob: wifi keeps dropping
0\t2\t[10:01] cat: ann: which printer
2\t3\t[10:02] ann: cat: laser printer
4\t4\t=== dan has joined #chat
1\t5\t[10:03] eve: bob: try the wifi firmware
";

    fn channel() -> Channel {
        Channel::parse("c", SAMPLE, Path::new("c")).unwrap()
    }

    fn window(t: usize, k: usize) -> WindowConfig {
        WindowConfig {
            context_range: t,
            future: k,
            max_seq_len: 40,
        }
    }

    #[test]
    fn zero_model_picks_most_recent() {
        let ch = channel();
        let vocab = build_vocab(std::slice::from_ref(&ch), 1).unwrap();
        let model = LinearRanker::zeros();
        for t in 1..ch.len() {
            assert_eq!(predict_parent(&model, &ch, &vocab, t, &window(4, 0)).unwrap(), t - 1);
        }
        // position 0 has only the self pair
        assert_eq!(predict_parent(&model, &ch, &vocab, 0, &window(4, 0)).unwrap(), 0);
        let p = predict_channel(&model, &ch, &vocab, &window(4, 0)).unwrap();
        assert_eq!(p.graph.parents(), &[0, 0, 1, 2, 3, 4]);
        assert_eq!(p.clustering.num_clusters(), 1);
    }

    #[test]
    fn self_pair_weight_gives_singletons() {
        let ch = channel();
        let vocab = build_vocab(std::slice::from_ref(&ch), 1).unwrap();
        let mut w = vec![0.0; NUM_FEATURES];
        w[13] = 5.0;
        let model = LinearRanker::from_weights(w).unwrap();
        let p = predict_channel(&model, &ch, &vocab, &window(4, 2)).unwrap();
        assert_eq!(p.graph, ReplyGraph::singletons(6));
        assert_eq!(p.clustering.num_clusters(), 6);
    }

    #[test]
    fn gold_choices_reproduce_gold_clusters() {
        let ch = channel();
        let vocab = build_vocab(std::slice::from_ref(&ch), 1).unwrap();
        let encoded = EncodedChannel::new(&ch, &vocab, 40);
        let examples: Vec<Example> = (0..ch.len())
            .map(|t| channel_example(&ch, &encoded, t, &window(8, 0), false).unwrap())
            .collect();
        let slots: Vec<usize> = examples.iter().map(|e| e.batch.parent_slot.unwrap()).collect();
        let p = decode_channel(&examples, &slots).unwrap();
        assert_eq!(p.graph, ch.gold_graph());
        assert_eq!(p.clustering, ch.gold_clusters);
    }

    #[test]
    fn future_winner_becomes_child() {
        // 0 picks 2, 1 picks itself, 2 picks itself, 3 picks 1
        let g = links_to_graph(&[2, 1, 2, 1]).unwrap();
        assert_eq!(g.parents(), &[0, 1, 0, 1]);
        // a message that already links backwards keeps its own parent
        let g = links_to_graph(&[1, 0, 2]).unwrap();
        assert_eq!(g.parents(), &[0, 0, 2]);
        // two claims on the same message: the later one wins
        let g = links_to_graph(&[2, 2, 2]).unwrap();
        assert_eq!(g.parents(), &[0, 1, 1]);
        assert!(links_to_graph(&[3, 0]).is_err());
    }

    #[test]
    fn decode_rejects_invalid_slots() {
        let ch = channel();
        let vocab = build_vocab(std::slice::from_ref(&ch), 1).unwrap();
        let encoded = EncodedChannel::new(&ch, &vocab, 40);
        let examples: Vec<Example> = (0..2)
            .map(|t| channel_example(&ch, &encoded, t, &window(4, 0), false).unwrap())
            .collect();
        assert!(matches!(decode_channel(&examples, &[1, 1]), Err(Error::InvalidParentSlot(1))));
        assert!(decode_channel(&examples, &[0]).is_err());
    }

    #[test]
    fn channel_order_does_not_matter() {
        let a = channel();
        let b = Channel::parse("d", &SAMPLE.replace("printer", "scanner"), Path::new("d")).unwrap();
        let vocab = build_vocab(&[a.clone(), b.clone()], 1).unwrap();
        let w: Vec<f64> = (0..NUM_FEATURES).map(|i| (i as f64).cos()).collect();
        let model = LinearRanker::from_weights(w).unwrap();
        let run = |chs: &[&Channel]| -> Vec<ChannelPrediction> {
            chs.iter().map(|c| predict_channel(&model, c, &vocab, &window(4, 1)).unwrap()).collect()
        };
        let ab = run(&[&a, &b]);
        let ba = run(&[&b, &a]);
        assert_eq!(ab[0], ba[1]);
        assert_eq!(ab[1], ba[0]);
    }
}
