//! Flat `key=value` configuration files. Keys are long flag names without the
//! leading dashes; `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, Result};

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return invalid(format!("config line {}: expected key=value, got '{raw}'", no + 1));
            };
            let key = k.trim().trim_start_matches("--").replace('_', "-");
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return invalid(format!("config line {}: duplicate key '{key}'", no + 1));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .or_else(|_| invalid(format!("config key '{key}': cannot parse '{v}'"))),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.entries.get(key).map(String::as_str) {
            None => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => invalid(format!("config key '{key}': expected a boolean, got '{v}'")),
        }
    }

    /// Fails on keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => invalid(format!("unknown config key '{k}' (allowed: {})", allowed.join(", "))),
            None => Ok(()),
        }
    }
}
