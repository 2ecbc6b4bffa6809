//! Seeded generator of interleaved keyword-themed chat channels with gold
//! reply links, used for desk-scale training and tests.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::corpus::Channel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub channels: usize,
    pub conversations: usize,
    /// Messages per conversation, joins excluded.
    pub messages: usize,
    /// Size of the shared theme pool; each conversation of a channel draws a
    /// distinct theme.
    pub themes: usize,
    pub words_per_theme: usize,
    pub speakers_per_conversation: usize,
    /// Nicks shared by all channels; each channel draws its speakers from it.
    pub speaker_pool: usize,
    /// Chance of a `=== nick has joined` line before each chat message.
    pub join_rate: f64,
    /// Chance that a reply names the parent's speaker.
    pub address_rate: f64,
    /// Mean gap between consecutive lines, in minutes.
    pub mean_gap: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            channels: 20,
            conversations: 3,
            messages: 30,
            themes: 6,
            words_per_theme: 10,
            speakers_per_conversation: 3,
            speaker_pool: 40,
            join_rate: 0.03,
            address_rate: 0.3,
            mean_gap: 0.7,
        }
    }
}

const FILLER_WORDS: usize = 30;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Synth(m));
        if self.channels == 0 || self.conversations == 0 || self.messages == 0 {
            return fail("channels, conversations and messages must all be positive".into());
        }
        if self.conversations > self.themes {
            return fail(format!(
                "{} conversations per channel need distinct themes but only {} exist",
                self.conversations, self.themes
            ));
        }
        if self.words_per_theme < 3 {
            return fail("each theme needs at least 3 words".into());
        }
        if self.speakers_per_conversation == 0 {
            return fail("each conversation needs at least one speaker".into());
        }
        if self.conversations * self.speakers_per_conversation > self.speaker_pool {
            return fail(format!(
                "{} conversations of {} speakers need more than {} nicks",
                self.conversations, self.speakers_per_conversation, self.speaker_pool
            ));
        }
        for (name, p) in [("join_rate", self.join_rate), ("address_rate", self.address_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.mean_gap.is_finite() && self.mean_gap > 0.0) {
            return fail(format!("mean_gap must be positive, got {}", self.mean_gap));
        }
        Ok(())
    }
}

/// Pronounceable lowercase words, unique across calls on the same set.
fn fresh_word(rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>, syllables: usize) -> String {
    const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "gr", "st"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
    loop {
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
        }
        if used.insert(w.clone()) {
            return w;
        }
    }
}

struct Lexicon {
    themes: Vec<Vec<String>>,
    fillers: Vec<String>,
    nicks: Vec<String>,
}

fn lexicon(config: &SynthConfig, rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>) -> Lexicon {
    let themes = (0..config.themes)
        .map(|_| (0..config.words_per_theme).map(|_| fresh_word(rng, used, 3)).collect())
        .collect();
    let fillers = (0..FILLER_WORDS).map(|_| fresh_word(rng, used, 2)).collect();
    let nicks = (0..config.speaker_pool).map(|_| fresh_word(rng, used, 2)).collect();
    Lexicon { themes, fillers, nicks }
}

fn clock(minutes: f64) -> String {
    let m = minutes as u64 % 1440;
    format!("[{:02}:{:02}]", m / 60, m % 60)
}

/// Annotated text of one channel.
fn channel_text(config: &SynthConfig, lex: &Lexicon, rng: &mut ChaCha8Rng) -> String {
    let theme_ids: Vec<usize> = rand::seq::index::sample(rng, config.themes, config.conversations).into_vec();
    let per = config.speakers_per_conversation;
    let drawn = rand::seq::index::sample(rng, lex.nicks.len(), config.conversations * per).into_vec();
    let speakers: Vec<Vec<&str>> = drawn.chunks(per).map(|c| c.iter().map(|&i| lex.nicks[i].as_str()).collect()).collect();
    let gap = Exp::new(1.0 / config.mean_gap).expect("validated mean gap");

    // (position, speaker) of the latest message per conversation
    let mut last: Vec<Option<(usize, usize)>> = vec![None; config.conversations];
    let mut remaining = vec![config.messages; config.conversations];
    let mut minutes = rng.random_range(0.0..1440.0);
    let mut out = String::new();
    let mut pos = 0usize;
    let total = config.conversations * config.messages;
    for _ in 0..total {
        // draw the next conversation in proportion to its remaining messages
        let mut pick = rng.random_range(0..remaining.iter().sum::<usize>());
        let conv = remaining
            .iter()
            .position(|&r| {
                if pick < r {
                    true
                } else {
                    pick -= r;
                    false
                }
            })
            .expect("some conversation has messages left");
        remaining[conv] -= 1;
        minutes += gap.sample(rng);

        if rng.random_bool(config.join_rate) {
            let nick = speakers.choose(rng).unwrap().choose(rng).unwrap();
            writeln!(out, "{pos}\t{pos}\t=== {nick} has joined #synth").unwrap();
            pos += 1;
        }

        let pool = &speakers[conv];
        let speaker = match last[conv] {
            Some((_, prev)) if pool.len() > 1 => {
                let mut s = rng.random_range(0..pool.len() - 1);
                if s >= prev {
                    s += 1;
                }
                s
            }
            _ => rng.random_range(0..pool.len()),
        };
        let theme = &lex.themes[theme_ids[conv]];
        let count = rng.random_range(2..=3);
        let mut words: Vec<&str> = rand::seq::index::sample(rng, theme.len(), count)
            .into_iter()
            .map(|i| theme[i].as_str())
            .collect();
        let fillers = rng.random_range(1..=2);
        for _ in 0..fillers {
            words.push(lex.fillers.choose(rng).unwrap());
        }
        words.shuffle(rng);
        let mut body = words.join(" ");
        let parent = match last[conv] {
            Some((p, prev)) => {
                if prev != speaker && rng.random_bool(config.address_rate) {
                    body = format!("{}: {body}", pool[prev]);
                }
                p
            }
            None => pos,
        };
        let raw = format!("{} {}: {body}", clock(minutes), pool[speaker]);
        writeln!(out, "{parent}\t{pos}\t{raw}").unwrap();
        last[conv] = Some((pos, speaker));
        pos += 1;
    }
    out
}

/// Generates `config.channels` channels named `synth-000`, `synth-001`, ...
/// The output depends only on the configuration.
pub fn synthesize(config: &SynthConfig) -> Result<Vec<Channel>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut used = BTreeSet::new();
    let lex = lexicon(config, &mut rng, &mut used);
    (0..config.channels)
        .map(|c| {
            let name = format!("synth-{c:03}");
            let text = channel_text(config, &lex, &mut rng);
            Channel::parse(name.clone(), &text, Path::new(&name))
        })
        .collect()
}

/// Writes each channel to `dir/<name>.tsv`.
pub fn write_channels(dir: &Path, channels: &[Channel]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for ch in channels {
        ch.save(&dir.join(format!("{}.tsv", ch.name)))?;
    }
    Ok(())
}
