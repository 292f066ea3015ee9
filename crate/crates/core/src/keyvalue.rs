//! Flat `key = value` configuration text.
//!
//! One entry per line, `#` starts a comment, keys are dotted paths such as
//! `wave.hs`. Duplicate keys are rejected so a file has one reading.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{PasError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                PasError::Parse(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    no + 1
                ))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(PasError::Parse(format!("line {}: empty key", no + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(PasError::Parse(format!(
                    "line {}: duplicate key '{k}'",
                    no + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get_opt(key)?
            .ok_or_else(|| PasError::Parse(format!("missing key '{key}'")))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| PasError::Parse(format!("key '{key}': cannot parse '{v}'"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get_opt(key)?.unwrap_or(default))
    }

    /// Fails on keys outside `allowed`, catching typos in hand-edited files.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(PasError::Parse(format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }

    /// Sorted `key = value` lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
