//! Line-oriented `key = value` configuration with `[section]` headers.
//!
//! Blank lines and lines starting with `#` are ignored. Keys before the
//! first header belong to the `run` section.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

const KNOWN: &[(&str, &[&str])] = &[
    ("run", &["seed", "window", "horizon", "time_unit_label"]),
    ("system", &["n_nodes", "nsize", "vsize", "dsize", "beta", "lambda"]),
    ("failures", &["model", "period", "ids", "import", "export"]),
    (
        "strategy",
        &[
            "kind", "n", "k", "fragment_bits", "pgs", "slots", "repair_delay", "objects", "r", "pacing",
            "pass_period", "per_pass", "gamma", "write",
        ],
    ),
    ("bounds", &["eps_c", "eps_d", "eps", "betas"]),
    ("sweep", &["betas", "strategies", "seeds"]),
    ("verify", &["rate_trials", "replay_cases"]),
];

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = "run".to_string();
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("line {line_no}: malformed section header `{line}`"))?
                    .trim();
                if !KNOWN.iter().any(|(s, _)| *s == name) {
                    bail!("line {line_no}: unknown section `{name}`");
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line_no}: expected `key = value`, got `{line}`"))?;
            let key = key.trim();
            let full = format!("{section}.{key}");
            let keys = KNOWN.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !keys.contains(&key) {
                bail!("line {line_no}: unknown key `{full}`");
            }
            if values.insert(full.clone(), value.trim().to_string()).is_some() {
                bail!("line {line_no}: duplicate key `{full}`");
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("bad value `{v}` for key `{key}`: {e}")))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some(v) = self.values.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|e| anyhow!("bad entry `{s}` for key `{key}`: {e}")))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Reject keys that make no sense together with the chosen strategy.
    pub fn forbid(&self, keys: &[&str], why: &str) -> Result<()> {
        if let Some(k) = keys.iter().find(|k| self.has(k)) {
            bail!("key `{k}` cannot be set: {why}");
        }
        Ok(())
    }
}
