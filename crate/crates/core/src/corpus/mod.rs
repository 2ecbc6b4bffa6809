//! Chat-log parsing, vocabulary construction and context windows.

mod channel;
mod line;
mod stats;
mod vocab;
mod window;

pub use channel::{channel_files, load_annotated_channel, load_channels, Channel, Message};
pub use line::{parse_irc_line, tokenize, ParsedLine};
pub use stats::CorpusStats;
pub use vocab::{build_vocab, Vocabulary, CLS, MASK, NUM_RESERVED, PAD, SEP, UNK};
pub use window::{
    build_channel_windows, build_context_window, join_pair, EncodedChannel, PairBatch, WindowConfig,
    MIN_SIDE_TOKENS,
};
