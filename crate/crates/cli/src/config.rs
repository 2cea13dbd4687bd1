use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Keys accepted in a config file. Dashes and underscores are interchangeable.
pub const KEYS: &[&str] = &[
    "variant",
    "mask_aspect",
    "seeds",
    "embed_dim",
    "hidden_dim",
    "window",
    "use_position",
    "use_segment",
    "lr",
    "beta1",
    "beta2",
    "adam_epsilon",
    "max_epochs",
    "patience",
    "eval_every",
    "max_len",
];

/// Defaults read from a `key = value` file. Blank lines and lines starting
/// with `#` are skipped.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected key = value", i + 1);
            };
            let key = key.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                bail!("line {}: unknown key {key:?}", i + 1);
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                bail!("line {}: duplicate key {key:?}", i + 1);
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KEYS.contains(&key), "unregistered key {key}");
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("config key {key}: {e}")))
            .transpose()
    }

    /// The flag value if given, else the config value, else `default`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    /// Boolean switches: a flag can only turn a setting on.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.get(key)?.unwrap_or(false))
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds = s
        .split(',')
        .map(|p| p.trim().parse::<u64>().with_context(|| format!("bad seed {p:?}")))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}
