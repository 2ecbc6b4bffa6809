//! Parsing of single IRC log lines and the word-level tokenizer.

use crate::error::{Error, Result};

/// The pieces of one raw log line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedLine {
    pub speaker: String,
    /// Minutes since midnight, as printed in the `[HH:MM]` prefix.
    pub time: Option<u32>,
    pub body: String,
    pub is_system: bool,
    /// Nick addressed at the start of the body (`@nick`, `nick:` or `nick,`).
    pub target_nick: Option<String>,
}

/// Parse one line of the form `[HH:MM] nick: body`, `[HH:MM] * nick action`
/// or `=== nick <event>`.
pub fn parse_irc_line(raw: &str) -> Result<ParsedLine> {
    let line = raw.trim_end_matches(['\r', '\n']);
    let malformed = || Error::Parse(raw.to_string());
    if line.trim().is_empty() {
        return Err(malformed());
    }

    if let Some(rest) = line.trim_start().strip_prefix("===") {
        let rest = rest.trim();
        let speaker = rest.split_whitespace().next().ok_or_else(malformed)?;
        return Ok(ParsedLine {
            speaker: speaker.to_string(),
            time: None,
            body: rest.to_string(),
            is_system: true,
            target_nick: None,
        });
    }

    let (time, rest) = parse_timestamp(line.trim_start()).ok_or_else(malformed)?;
    let rest = rest.trim_start();

    if let Some(action) = rest.strip_prefix("* ") {
        let action = action.trim_start();
        let speaker = action.split_whitespace().next().ok_or_else(malformed)?;
        let body = action[speaker.len()..].trim_start();
        return Ok(ParsedLine {
            speaker: speaker.to_string(),
            time: Some(time),
            body: body.to_string(),
            is_system: false,
            target_nick: None,
        });
    }

    let colon = rest.find(':').ok_or_else(malformed)?;
    let speaker = &rest[..colon];
    if speaker.is_empty() || speaker.contains(char::is_whitespace) {
        return Err(malformed());
    }
    let body = rest[colon + 1..].trim();
    Ok(ParsedLine {
        speaker: speaker.to_string(),
        time: Some(time),
        body: body.to_string(),
        is_system: false,
        target_nick: addressed_nick(body),
    })
}

fn parse_timestamp(line: &str) -> Option<(u32, &str)> {
    let rest = line.strip_prefix('[')?;
    let close = rest.find(']')?;
    let (hh, mm) = rest[..close].split_once(':')?;
    let hours: u32 = hh.parse().ok()?;
    let minutes: u32 = mm.parse().ok()?;
    if hours >= 24 || minutes >= 60 || mm.len() != 2 {
        return None;
    }
    Some((hours * 60 + minutes, &rest[close + 1..]))
}

fn is_nick_char(c: char) -> bool {
    c.is_alphanumeric() || "-_[]\\`^{}|".contains(c)
}

fn addressed_nick(body: &str) -> Option<String> {
    if let Some(rest) = body.strip_prefix('@') {
        let nick: String = rest.trim_start().chars().take_while(|&c| is_nick_char(c)).collect();
        return (!nick.is_empty()).then_some(nick);
    }
    let first = body.split_whitespace().next()?;
    let stripped = first.strip_suffix([',', ':'])?;
    if stripped.is_empty() || !stripped.chars().all(is_nick_char) {
        return None;
    }
    Some(stripped.to_string())
}

/// Lower-cased word tokenizer: runs of alphanumerics form words and every
/// other non-space character is a token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_lowercase().collect());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_line_with_at_address() {
        let p = parse_irc_line("[03:04] Amaranth: @cliche American").unwrap();
        assert_eq!(p.speaker, "Amaranth");
        assert_eq!(p.time, Some(184));
        assert_eq!(p.target_nick.as_deref(), Some("cliche"));
        assert_eq!(p.body, "@cliche American");
        assert!(!p.is_system);
    }

    #[test]
    fn join_line_is_system() {
        let p = parse_irc_line("=== welshbyte  has joined #ubuntu").unwrap();
        assert_eq!(p.speaker, "welshbyte");
        assert!(p.is_system);
        assert_eq!(p.time, None);
        assert_eq!(p.target_nick, None);
    }

    #[test]
    fn empty_and_garbage_lines_fail() {
        assert!(matches!(parse_irc_line(""), Err(Error::Parse(_))));
        assert!(parse_irc_line("   ").is_err());
        assert!(parse_irc_line("just some words").is_err());
        assert!(parse_irc_line("[25:00] a: b").is_err());
        assert!(parse_irc_line("[03:04] two words: body").is_err());
    }

    #[test]
    fn address_forms() {
        let nick = |s: &str| parse_irc_line(s).unwrap().target_nick;
        assert_eq!(nick("[03:04] cliche: @ Amaranth, hahahaha").as_deref(), Some("Amaranth"));
        assert_eq!(nick("[03:05] jobezone: @e-sin then it's xscreensaver").as_deref(), Some("e-sin"));
        assert_eq!(nick("[03:05] a: benoy, try this").as_deref(), Some("benoy"));
        assert_eq!(nick("[03:05] a: benoy: try this").as_deref(), Some("benoy"));
        assert_eq!(nick("[03:04] e-sin: TNT2 :)"), None);
        assert_eq!(nick("[03:04] e-sin: no i just want"), None);
    }

    #[test]
    fn action_line() {
        let p = parse_irc_line("[10:00] * bob waves").unwrap();
        assert_eq!(p.speaker, "bob");
        assert_eq!(p.body, "waves");
        assert!(!p.is_system);
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", ",", "world", "!"]);
        assert_eq!(tokenize("@e-sin it's"), vec!["@", "e", "-", "sin", "it", "'", "s"]);
        assert!(tokenize("   ").is_empty());
    }
}
