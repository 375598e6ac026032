//! Flat `section.key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

pub const KEYS: &[&str] = &[
    "data.corpus",
    "data.citations",
    "data.labels",
    "data.bundle",
    "data.refined_bundle",
    "data.out",
    "corpus.max_n",
    "corpus.min_freq",
    "corpus.max_vocab",
    "corpus.vocab",
    "refine.edge_type",
    "refine.t_high",
    "refine.t_low",
    "refine.max_added_per_node",
    "refine.embeddings",
    "refine.window",
    "refine.dim",
    "model.variant",
    "model.hidden",
    "model.heads",
    "model.dropout",
    "train.lr",
    "train.epochs",
    "train.patience",
    "train.weight_decay",
    "train.seed",
    "train.seeds",
    "train.variants",
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    source: Option<PathBuf>,
    values: BTreeMap<String, (String, usize)>,
}

impl Config {
    pub fn parse(text: &str, source: Option<&Path>) -> Result<Self> {
        let origin = source.map_or_else(|| "<config>".to_string(), |p| p.display().to_string());
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let Some((key, value)) = l.split_once('=') else {
                bail!("{origin}:{line}: expected `section.key = value`");
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                bail!("{origin}:{line}: unknown config key `{key}`");
            }
            if values
                .insert(key.to_string(), (value.trim().to_string(), line))
                .is_some()
            {
                bail!("{origin}:{line}: config key `{key}` set twice");
            }
        }
        Ok(Self {
            source: source.map(Path::to_path_buf),
            values,
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text, Some(p))
            }
        }
    }

    /// Typed lookup; a value that fails to parse is an error naming the key.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        debug_assert!(KEYS.contains(&key), "unregistered key {key}");
        let Some((value, line)) = self.values.get(key) else {
            return Ok(None);
        };
        let origin = self
            .source
            .as_ref()
            .map_or_else(|| "<config>".to_string(), |p| p.display().to_string());
        value
            .parse()
            .map(Some)
            .map_err(|e| anyhow::anyhow!("{origin}:{line}: invalid value `{value}` for config key `{key}`: {e}"))
    }

    /// A path value, resolved against the config file's directory when
    /// relative.
    pub fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        let Some(p) = self.get::<PathBuf>(key)? else {
            return Ok(None);
        };
        match (&self.source, p.is_relative()) {
            (Some(src), true) => Ok(Some(src.parent().unwrap_or(Path::new(".")).join(p))),
            _ => Ok(Some(p)),
        }
    }

    /// Flag value if given, else the config value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn pick_path(&self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.path(key),
        }
    }
}

/// Renders `(key, value)` pairs in the config format.
pub fn render(header: &str, pairs: &[(&str, String)]) -> String {
    let mut s = format!("# {header}\n");
    for (k, v) in pairs {
        debug_assert!(KEYS.contains(k));
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}
