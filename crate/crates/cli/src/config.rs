//! Layered `key = value` configuration.
//!
//! Layers, later wins: built-in defaults, each `--config` file in order,
//! `EDGEBOT_*` environment variables, then command-line flags. An
//! environment variable maps to a key by dropping the prefix, lowercasing,
//! and turning `__` into `.`: `EDGEBOT_RF__MAX_DEPTH` sets `rf.max_depth`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

pub const ENV_PREFIX: &str = "EDGEBOT_";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, (String, String)>,
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str, origin: &str) {
        self.values.insert(key.to_string(), (value.to_string(), origin.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|v| v.0.as_str())
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, origin)) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("{origin}: invalid value `{v}` for `{key}`"))),
        }
    }

    /// Entries whose key starts with `prefix.`, with the prefix removed.
    pub fn section(&self, prefix: &str) -> Vec<(String, String, String)> {
        let p = format!("{prefix}.");
        self.values
            .iter()
            .filter_map(|(k, (v, o))| k.strip_prefix(&p).map(|k| (k.to_string(), v.clone(), o.clone())))
            .collect()
    }

    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key = value", i + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(CliError::Usage(format!("{origin}:{}: empty key", i + 1)));
            }
            self.set(k, v.trim(), &format!("{origin}:{}", i + 1));
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.merge_text(&text, &path.display().to_string())
    }

    pub fn merge_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) {
        let mut vars: Vec<(String, String)> = vars.into_iter().collect();
        vars.sort();
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                let key = rest.to_lowercase().replace("__", ".");
                self.set(&key, &value, &name);
            }
        }
    }
}
