//! Flat `key = value` files with optional `[section]` headers.
//!
//! ```text
//! # comment
//! rate = 10000000
//!
//! [nc-2/3]
//! correction = nc
//! k = 10
//! ```
//!
//! Keys before the first header belong to the global section. Blank lines and
//! lines starting with `#` or `;` are ignored. Keys are case-sensitive.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value` or `[section]`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key {key:?} repeated")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: section {name:?} repeated")]
    DuplicateSection { line: usize, name: String },
    #[error("{key} = {value:?}: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown key {key:?} in {section}")]
    UnknownKey { section: String, key: String },
}

/// One block of settings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Section {
    entries: BTreeMap<String, String>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Parse `key` if present.
    pub fn parse<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::Value {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reject keys outside `allowed`; `label` names the section in the error.
    pub fn expect_keys(&self, label: &str, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(key) => Err(ConfigError::UnknownKey {
                section: label.to_string(),
                key: key.to_string(),
            }),
            None => Ok(()),
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }
}

/// A parsed file: the global section plus named sections in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    pub global: Section,
    pub sections: Vec<(String, Section)>,
}

impl ConfigFile {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
    }
}

impl FromStr for ConfigFile {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        parse(text)
    }
}

pub fn parse(text: &str) -> Result<ConfigFile, ConfigError> {
    let mut file = ConfigFile::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                })?;
            if file.section(name).is_some() {
                return Err(ConfigError::DuplicateSection {
                    line,
                    name: name.to_string(),
                });
            }
            file.sections.push((name.to_string(), Section::default()));
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .filter(|(k, _)| !k.is_empty())
            .ok_or_else(|| ConfigError::Syntax {
                line,
                text: raw.to_string(),
            })?;
        let section = match file.sections.last_mut() {
            Some((_, s)) => s,
            None => &mut file.global,
        };
        if section.entries.contains_key(key) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        section.insert(key, value);
    }
    Ok(file)
}
