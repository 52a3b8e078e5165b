//! Flat `key = value` text files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("key `{key}`: invalid value `{value}`: {reason}")]
    Invalid { key: String, value: String, reason: String },
}

/// Parsed key-value pairs; values are consumed with [`KvMap::take`] so that
/// leftover (unknown) keys can be reported.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(KvError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(KvError::Syntax { line: i + 1 });
            }
            if entries.insert(k.to_owned(), v.to_owned()).is_some() {
                return Err(KvError::Duplicate {
                    line: i + 1,
                    key: k.to_owned(),
                });
            }
        }
        Ok(KvMap { entries })
    }

    pub fn take_raw(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Removes and parses `key`, if present.
    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| KvError::Invalid {
                key: key.to_owned(),
                reason: e.to_string(),
                value: v,
            }),
        }
    }

    pub fn take_or<T>(&mut self, key: &str, default: T) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Removes a comma-separated RGB triple.
    pub fn take_rgb(&mut self, key: &str) -> Result<Option<[u8; 3]>, KvError> {
        let Some(v) = self.entries.remove(key) else {
            return Ok(None);
        };
        parse_rgb(&v).map(Some).ok_or_else(|| KvError::Invalid {
            key: key.to_owned(),
            value: v,
            reason: "expected r,g,b".into(),
        })
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<(), KvError> {
        match self.entries.into_keys().next() {
            Some(k) => Err(KvError::UnknownKey(k)),
            None => Ok(()),
        }
    }
}

pub fn parse_rgb(s: &str) -> Option<[u8; 3]> {
    let parts: Vec<u8> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    parts.try_into().ok()
}

/// Writes `key = value` lines in the given order.
pub fn render(pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        writeln!(out, "{k} = {v}").expect("writing to a String cannot fail");
    }
    out
}
