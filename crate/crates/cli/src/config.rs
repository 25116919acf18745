//! Flat `key = value` settings file.
//!
//! Blank lines and lines starting with `#` are ignored. Recognised keys are
//! listed in [`KEYS`]; anything else is rejected so typos surface early.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

pub const KEYS: [&str; 9] = ["T", "k", "prior", "guidance", "seed", "threads", "method", "beta_min", "beta_max"];

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected key = value", n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(format!("config line {}: unknown key {key:?} (known: {})", n + 1, KEYS.join(", ")));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(format!("config line {}: duplicate key {key:?}", n + 1));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("reading config {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    /// Typed value of `key`, if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| format!("config key {key}: {e}")))
            .transpose()
    }
}

/// Flag, then config file, then fallback.
pub fn pick<T: FromStr>(flag: Option<T>, file: &FileConfig, key: &str, fallback: T) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => Ok(file.get(key)?.unwrap_or(fallback)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let c = FileConfig::parse("# run\nT = 20\n\nk=3\nprior = cumulative:4\n").unwrap();
        assert_eq!(c.get::<usize>("T").unwrap(), Some(20));
        assert_eq!(c.get::<usize>("k").unwrap(), Some(3));
        assert_eq!(c.get::<String>("prior").unwrap().as_deref(), Some("cumulative:4"));
        assert_eq!(c.get::<u64>("seed").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed_lines() {
        assert!(FileConfig::parse("steps = 3").unwrap_err().contains("unknown key"));
        assert!(FileConfig::parse("k = 1\nk = 2").unwrap_err().contains("duplicate"));
        assert!(FileConfig::parse("k 1").unwrap_err().contains("line 1"));
        let c = FileConfig::parse("k = many").unwrap();
        assert!(c.get::<usize>("k").is_err());
    }

    #[test]
    fn flags_beat_file_beats_fallback() {
        let c = FileConfig::parse("k = 3").unwrap();
        assert_eq!(pick(Some(9), &c, "k", 5).unwrap(), 9);
        assert_eq!(pick(None, &c, "k", 5).unwrap(), 3);
        assert_eq!(pick(None, &c, "T", 10usize).unwrap(), 10);
    }
}
