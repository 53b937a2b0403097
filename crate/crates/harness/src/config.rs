//! Flat `key = value` configuration files.
//!
//! One entry per line. Blank lines and lines starting with `#` are ignored.
//! Keys are lowercase ASCII letters, digits, `_`, `-` and `.`; values run to
//! the end of the line with surrounding whitespace trimmed. A key may appear
//! only once per file; command-line flags override file entries.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'_' | b'-' | b'.'))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| HarnessError::Config { line: i + 1, reason };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            if !valid_key(k) {
                return Err(err(format!("invalid key `{k}`")));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(err(format!("duplicate key `{k}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| HarnessError::Value { key: spec.to_string(), reason: "expected key=value".into() })?;
        let k = k.trim();
        if !valid_key(k) {
            return Err(HarnessError::Value { key: k.to_string(), reason: "invalid key".into() });
        }
        self.set(k, v.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| HarnessError::Value { key: key.to_string(), reason: format!("`{v}`: {e}") })
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get_parsed(key)?.unwrap_or(default))
    }

    /// A real number, also accepting `2^k`.
    pub fn get_real(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => crate::grid::parse_value(v)
                .map_err(|_| HarnessError::Value { key: key.to_string(), reason: format!("`{v}` is not a number") }),
        }
    }

    /// A count, also accepting `2^k`.
    pub fn get_count(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.get_real(key, default as f64)?;
        if v < 0.0 || v.fract() != 0.0 || v > 1e15 {
            return Err(HarnessError::Value { key: key.to_string(), reason: format!("{v} is not a count") });
        }
        Ok(v as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let c = Config::parse("# header\n\nseed = 7\n  n=2^10 \nmechanism = cs\n").unwrap();
        assert_eq!(c.get("seed"), Some("7"));
        assert_eq!(c.get_count("n", 0).unwrap(), 1024);
        assert_eq!(c.get_or::<String>("mechanism", "x".into()).unwrap(), "cs");
        assert_eq!(c.get_or("trials", 3usize).unwrap(), 3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match Config::parse("a = 1\nno equals sign\n") {
            Err(HarnessError::Config { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(Config::parse("a = 1\na = 2"), Err(HarnessError::Config { line: 2, .. })));
        assert!(matches!(Config::parse("Bad Key = 1"), Err(HarnessError::Config { line: 1, .. })));
    }

    #[test]
    fn overrides_and_round_trip() {
        let mut c = Config::parse("seed = 1\n").unwrap();
        c.apply_override("seed=9").unwrap();
        c.apply_override("eps = 0.5").unwrap();
        assert!(c.apply_override("novalue").is_err());
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
        assert_eq!(c.get_real("eps", 1.0).unwrap(), 0.5);
        assert!(c.get_count("eps", 1).is_err());
    }
}
