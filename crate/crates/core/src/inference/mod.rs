//! Parent prediction and reply-graph clustering.

mod graph;
mod predict;

pub use graph::{build_clusters, Clustering, ReplyGraph, UnionFind};
pub use predict::{
    decode_channel, links_to_graph, predict_channel, predict_examples, predict_parent, predict_slot, ChannelPrediction,
};
