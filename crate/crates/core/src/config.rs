//! Plain-text `key=value` configuration files.
//!
//! One flat namespace with dotted keys (`gen.n`, `model.conv_dims`, ...).
//! Lines starting with `#` and blank lines are ignored. Values written back
//! out are sorted by key so a config round-trips byte-identically.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::MalformedRow {
                path: origin.to_string(),
                line: idx + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Overlay `other` on top of self; `other` wins on conflicts.
    pub fn merge(&mut self, other: &KvConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidConfig(format!("key {key}: cannot parse {v:?}"))
            }),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parse_as::<u64>(key)?.unwrap_or(default))
    }

    pub fn get_i64(&self, key: &str, default: i64) -> Result<i64> {
        Ok(self.parse_as::<i64>(key)?.unwrap_or(default))
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parse_as::<usize>(key)?.unwrap_or(default))
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parse_as::<f64>(key)?.unwrap_or(default))
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.entries.get(key).map(|s| s.as_str()) {
            None => Ok(default),
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") => Ok(false),
            Some(v) => Err(Error::InvalidConfig(format!("key {key}: expected bool, got {v:?}"))),
        }
    }

    pub fn get_str(&self, key: &str, default: &str) -> String {
        self.entries
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    }

    /// Comma-separated list of usizes, e.g. `model.conv_dims=32,32,32`.
    pub fn get_usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.entries.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim().parse::<usize>().map_err(|_| {
                        Error::InvalidConfig(format!("key {key}: bad list element {p:?}"))
                    })
                })
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_roundtrip() {
        let cfg = KvConfig::parse("b=2\n# comment\na = 1\n\nc=x y\n", "t").unwrap();
        assert_eq!(cfg.get("a"), Some("1"));
        assert_eq!(cfg.get("c"), Some("x y"));
        assert_eq!(cfg.to_text(), "a=1\nb=2\nc=x y\n");
        let again = KvConfig::parse(&cfg.to_text(), "t").unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = KvConfig::parse("a=1\nnonsense\n", "cfg").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cfg:2"), "{msg}");
    }

    #[test]
    fn typed_getters() {
        let cfg = KvConfig::parse("x=3\ny=2.5\nz=true\nl=1,2,3\n", "t").unwrap();
        assert_eq!(cfg.get_u64("x", 0).unwrap(), 3);
        assert_eq!(cfg.get_f64("y", 0.0).unwrap(), 2.5);
        assert!(cfg.get_bool("z", false).unwrap());
        assert_eq!(cfg.get_usize_list("l", &[]).unwrap(), vec![1, 2, 3]);
        assert_eq!(cfg.get_u64("missing", 9).unwrap(), 9);
        assert!(cfg.get_u64("y", 0).is_err());
    }
}
