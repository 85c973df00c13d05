//! Flat `key = value` configuration with `[section]` headers.
//!
//! Keys are addressed as `section.key`. Every lookup is recorded, so the
//! resolved configuration (defaults included) can be written back out and
//! keys nobody asked for are reported as unknown.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("{0}")]
    Other(String),
}

impl ConfigError {
    pub fn invalid(key: &str, reason: impl ToString) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
    resolved: RefCell<BTreeMap<String, String>>,
    seen: RefCell<BTreeSet<String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: i + 1,
                    reason: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    reason: "empty key".into(),
                });
            }
            let key = if section.is_empty() {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate(key));
            }
        }
        Ok(Self {
            entries,
            ..Self::default()
        })
    }

    /// Override a value.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn raw(&self, key: &str) -> Option<String> {
        self.seen.borrow_mut().insert(key.to_string());
        self.entries.get(key).cloned()
    }

    fn record(&self, key: &str, value: &str) {
        self.resolved.borrow_mut().insert(key.to_string(), value.to_string());
    }

    pub fn get<T>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            Some(v) => {
                let parsed = v.parse::<T>().map_err(|e| ConfigError::invalid(key, e))?;
                self.record(key, &v);
                Ok(parsed)
            }
            None => {
                self.record(key, &default.to_string());
                Ok(default)
            }
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self
            .raw(key)
            .ok_or_else(|| ConfigError::invalid(key, "required key is missing"))?;
        let parsed = v.parse::<T>().map_err(|e| ConfigError::invalid(key, e))?;
        self.record(key, &v);
        Ok(parsed)
    }

    pub fn text(&self, key: &str, default: &str) -> Result<String, ConfigError> {
        self.get(key, default.to_string())
    }

    /// Comma-separated list; `a..b` expands integer ranges.
    pub fn list<T: FromStr>(&self, key: &str, default: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key).unwrap_or_else(|| default.to_string());
        self.record(key, &v);
        let mut out = Vec::new();
        for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if let Some((a, b)) = item.split_once("..") {
                let (a, b): (i64, i64) = (
                    a.trim().parse().map_err(|e| ConfigError::invalid(key, e))?,
                    b.trim().parse().map_err(|e| ConfigError::invalid(key, e))?,
                );
                for i in a..=b {
                    out.push(i.to_string().parse().map_err(|e| ConfigError::invalid(key, e))?);
                }
            } else {
                out.push(item.parse().map_err(|e| ConfigError::invalid(key, e))?);
            }
        }
        if out.is_empty() {
            return Err(ConfigError::invalid(key, "list is empty"));
        }
        Ok(out)
    }

    /// Error on the first key that was never looked up.
    pub fn check_unused(&self) -> Result<(), ConfigError> {
        let seen = self.seen.borrow();
        match self.entries.keys().find(|k| !seen.contains(*k)) {
            Some(k) => Err(ConfigError::UnknownKey(k.clone())),
            None => Ok(()),
        }
    }

    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.resolved.borrow().clone()
    }

    /// The resolved values in the file format, re-readable by [`parse`](Self::parse).
    pub fn render_resolved(&self) -> String {
        let resolved = self.resolved.borrow();
        let mut sections: BTreeMap<&str, Vec<(&str, &str)>> = BTreeMap::new();
        for (k, v) in resolved.iter() {
            let (s, key) = k.split_once('.').unwrap_or(("", k.as_str()));
            sections.entry(s).or_default().push((key, v));
        }
        let mut out = String::new();
        for (s, kvs) in sections {
            if !s.is_empty() {
                if !out.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{s}]");
            }
            for (k, v) in kvs {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}
