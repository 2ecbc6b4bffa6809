//! Flat `key=value` config files and flag/config/default precedence.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Values read from a config file, restricted to the keys a command accepts.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    source: Option<PathBuf>,
}

/// Parses `key=value` lines. Blank lines and lines starting with `#` are
/// skipped; keys may not repeat.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key=value, got {line:?}", no + 1);
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            bail!("line {}: empty key", no + 1);
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            bail!("line {}: key {key} given twice", no + 1);
        }
    }
    Ok(out)
}

pub fn write_key_values(path: &Path, values: &BTreeMap<String, String>) -> Result<()> {
    let text: String = values.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

impl Settings {
    /// Loads `path` (if any) and rejects keys outside `allowed`.
    pub fn load(path: Option<&Path>, allowed: &[&str]) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let values = parse_key_values(&text).with_context(|| format!("in config {}", path.display()))?;
        Self::from_values(values, Some(path.to_path_buf()), allowed)
    }

    pub fn from_values(values: BTreeMap<String, String>, source: Option<PathBuf>, allowed: &[&str]) -> Result<Self> {
        if let Some(bad) = values.keys().find(|k| !allowed.contains(&k.as_str())) {
            bail!("unknown config key {bad:?} (accepted: {})", allowed.join(", "));
        }
        Ok(Settings { values, source })
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                let origin = self.source.as_ref().map_or("config".to_string(), |p| p.display().to_string());
                anyhow::anyhow!("{origin}: bad value {raw:?} for {key}: {e}")
            }),
        }
    }

    /// Flag if given, else the config value, else `None`.
    pub fn lookup<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.parsed(key),
        }
    }

    /// Flag if given, else the config value, else `default`.
    pub fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.lookup(flag, key)?.unwrap_or(default))
    }
}

/// `on` / `off` switch used by boolean flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

impl FromStr for Switch {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "on" | "true" => Ok(Switch::On),
            "off" | "false" => Ok(Switch::Off),
            other => Err(format!("expected on or off, got {other:?}")),
        }
    }
}

impl std::fmt::Display for Switch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(if self.is_on() { "on" } else { "off" })
    }
}
