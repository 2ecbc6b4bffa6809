//! Annotated channel files: `parent_index <TAB> index <TAB> raw_line`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::line::{parse_irc_line, tokenize};
use crate::error::{Error, Result};
use crate::inference::{build_clusters, Clustering, ReplyGraph};

const MINUTES_PER_DAY: u32 = 1440;

/// One chat line with its gold reply-to annotation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    /// 0-based position within the channel.
    pub index: usize,
    pub raw: String,
    pub speaker: String,
    /// Minutes since midnight of the first day in the log, monotone across
    /// day rollovers.
    pub time: Option<u32>,
    pub is_system: bool,
    pub target_nick: Option<String>,
    /// Model input words: speaker prefix followed by the body.
    pub words: Vec<String>,
    /// Offset of the first body word in `words`.
    pub body_start: usize,
    /// Channel position of the reply-to parent; equal to `index` for a
    /// conversation start.
    pub gold_parent: usize,
    /// Original index of a parent that precedes the first line of the file.
    /// Such messages are treated as conversation starts within the channel.
    pub outside_parent: Option<u64>,
}

impl Message {
    pub fn body_words(&self) -> &[String] {
        &self.words[self.body_start..]
    }

    pub fn is_self_linked(&self) -> bool {
        self.gold_parent == self.index
    }
}

/// An ordered message sequence with its gold reply graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Channel {
    pub name: String,
    /// File index of the first message.
    pub first_index: u64,
    pub messages: Vec<Message>,
    pub gold_clusters: Clustering,
}

/// Tracks `[HH:MM]` stamps and adds a day whenever the clock runs backwards.
#[derive(Default)]
struct Clock {
    last: Option<u32>,
    day_offset: u32,
}

impl Clock {
    fn advance(&mut self, stamp: Option<u32>) -> Option<u32> {
        let stamp = stamp?;
        if let Some(last) = self.last {
            if stamp < last {
                self.day_offset += MINUTES_PER_DAY;
            }
        }
        self.last = Some(stamp);
        Some(stamp + self.day_offset)
    }
}

/// Builds a message from a raw line; `gold_parent` is filled in by the caller.
pub(crate) fn build_message(index: usize, raw: &str) -> Result<Message> {
    let parsed = parse_irc_line(raw)?;
    let (words, body_start) = if parsed.is_system {
        (tokenize(&parsed.body), 0)
    } else {
        let mut words = tokenize(&parsed.speaker);
        words.push(":".to_string());
        let start = words.len();
        words.extend(tokenize(&parsed.body));
        (words, start)
    };
    Ok(Message {
        index,
        raw: raw.to_string(),
        speaker: parsed.speaker,
        time: parsed.time,
        is_system: parsed.is_system,
        target_nick: parsed.target_nick,
        words,
        body_start,
        gold_parent: index,
        outside_parent: None,
    })
}

impl Channel {
    /// Builds a channel from `(file_parent, file_index, raw)` records.
    pub fn from_records<'a>(
        name: impl Into<String>,
        records: impl IntoIterator<Item = (u64, u64, &'a str)>,
        path_for_errors: &Path,
    ) -> Result<Channel> {
        let mut messages = Vec::new();
        let mut first_index = None;
        let mut clock = Clock::default();
        for (line_no, (parent, index, raw)) in records.into_iter().enumerate() {
            let line = line_no + 1;
            let first = *first_index.get_or_insert(index);
            let expected = first + messages.len() as u64;
            if index != expected {
                return Err(Error::data(
                    path_for_errors,
                    line,
                    format!("index {index} breaks the contiguous sequence (expected {expected})"),
                ));
            }
            if parent > index {
                return Err(Error::data(
                    path_for_errors,
                    line,
                    format!("parent {parent} follows message {index}"),
                ));
            }
            let position = messages.len();
            let mut message = build_message(position, raw)
                .map_err(|e| Error::data(path_for_errors, line, e.to_string()))?;
            message.time = clock.advance(message.time);
            if parent < first {
                message.outside_parent = Some(parent);
            } else {
                message.gold_parent = (parent - first) as usize;
            }
            messages.push(message);
        }
        if messages.is_empty() {
            return Err(Error::data(path_for_errors, 0, "no messages"));
        }
        let graph = ReplyGraph::new(messages.iter().map(|m| m.gold_parent).collect())?;
        Ok(Channel {
            name: name.into(),
            first_index: first_index.unwrap_or(0),
            gold_clusters: build_clusters(&graph),
            messages,
        })
    }

    /// Parses the text of an annotated file.
    pub fn parse(name: impl Into<String>, text: &str, path_for_errors: &Path) -> Result<Channel> {
        let mut records = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record = split_record(line)
                .ok_or_else(|| Error::data(path_for_errors, line_no + 1, "expected three columns"))?;
            records.push(record);
        }
        Channel::from_records(name, records, path_for_errors)
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn gold_graph(&self) -> ReplyGraph {
        ReplyGraph::new(self.messages.iter().map(|m| m.gold_parent).collect())
            .expect("gold parents are validated at load time")
    }

    /// Serializes in the annotated three-column format.
    pub fn to_annotated(&self) -> String {
        self.render_with_parents(|m| m.outside_parent.unwrap_or(self.first_index + m.gold_parent as u64))
    }

    /// Serializes with a predicted graph in place of the gold parents.
    pub fn to_annotated_with(&self, graph: &ReplyGraph) -> String {
        self.render_with_parents(|m| self.first_index + graph.parent(m.index) as u64)
    }

    fn render_with_parents(&self, parent_of: impl Fn(&Message) -> u64) -> String {
        let mut out = String::new();
        for m in &self.messages {
            let index = self.first_index + m.index as u64;
            writeln!(out, "{}\t{}\t{}", parent_of(m), index, m.raw).expect("writing to a String");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_annotated()).map_err(|e| Error::io(path, e))
    }
}

fn split_record(line: &str) -> Option<(u64, u64, &str)> {
    if let Some((parent, rest)) = line.split_once('\t') {
        let (index, raw) = rest.split_once('\t')?;
        return Some((parent.trim().parse().ok()?, index.trim().parse().ok()?, raw));
    }
    let line = line.trim_start();
    let (parent, rest) = line.split_once(char::is_whitespace)?;
    let rest = rest.trim_start();
    let (index, raw) = rest.split_once(char::is_whitespace)?;
    Some((parent.parse().ok()?, index.parse().ok()?, raw.trim_start()))
}

/// Loads one annotated channel file. The channel is named after the file stem.
pub fn load_annotated_channel(path: &Path) -> Result<Channel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Channel::parse(name, &text, path)
}

/// Lists annotated files under `path`: the file itself, or every `.tsv`/`.txt`
/// file directly inside a directory, sorted by name.
pub fn channel_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
        if p.is_file() && (ext == "tsv" || ext == "txt") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every channel found by [`channel_files`].
pub fn load_channels(path: &Path) -> Result<Vec<Channel>> {
    channel_files(path)?.iter().map(|p| load_annotated_channel(p)).collect()
}
