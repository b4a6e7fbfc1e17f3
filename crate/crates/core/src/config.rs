//! Flat `key = value` configuration text with `#` comments.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One `key = value` line and where it came from.
#[derive(Debug, Clone)]
pub struct Entry {
    pub line: usize,
    pub value: String,
}

/// Parsed key/value pairs. Every lookup marks the key as used so that
/// [`KeyValues::finish`] can reject leftovers as unknown.
#[derive(Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, Entry>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or_default().trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {line}: expected 'key = value', got '{body}'"))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Parse(format!("line {line}: empty key")));
            }
            let entry = Entry { line, value: value.trim().to_string() };
            if let Some(prev) = entries.insert(key.clone(), entry) {
                return Err(Error::Parse(format!(
                    "line {line}: duplicate key '{key}' (first set on line {})",
                    prev.line
                )));
            }
        }
        Ok(KeyValues { entries, used: Default::default() })
    }

    pub fn raw(&self, key: &str) -> Option<&Entry> {
        let e = self.entries.get(key);
        if e.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        e
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|_| {
                Error::Parse(format!("line {}: invalid value '{}' for key '{key}'", e.line, e.value))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Parse(format!("missing required key '{key}'")))
    }

    /// Comma-separated list of numbers.
    pub fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.raw(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|p| {
                p.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("line {}: invalid number '{}' in '{key}'", e.line, p.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Keys starting with `prefix`, in sorted order.
    pub fn keys_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries.keys().filter(move |k| k.starts_with(prefix)).map(String::as_str)
    }

    /// Errors on the first key that was never looked up.
    pub fn finish(self) -> Result<()> {
        let used = self.used.borrow();
        for (key, entry) in &self.entries {
            if !used.contains(key) {
                return Err(Error::Parse(format!("line {}: unknown key '{key}'", entry.line)));
            }
        }
        Ok(())
    }
}

/// Formats with 17 significant digits, enough for a lossless round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_reports_unknown_keys() {
        let kv = KeyValues::parse("# header\na = 1 # trailing\n\nb=2.5\nc = x\n").unwrap();
        assert_eq!(kv.require::<i32>("a").unwrap(), 1);
        assert_eq!(kv.get::<f64>("b").unwrap(), Some(2.5));
        let err = kv.finish().unwrap_err().to_string();
        assert!(err.contains("line 5") && err.contains("'c'"), "{err}");
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KeyValues::parse("just words").is_err());
        assert!(KeyValues::parse("a = 1\na = 2").unwrap_err().to_string().contains("duplicate"));
        let kv = KeyValues::parse("a = nope").unwrap();
        assert!(kv.get::<f64>("a").unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn lossless_formatting() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
