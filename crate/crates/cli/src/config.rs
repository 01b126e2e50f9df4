//! Flat `key=value` run settings. Command-line flags take precedence over
//! the config file; every resolved value is echoed into the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::failure::{CliResult, Failure};

pub fn parse_config(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("config line {}: expected key=value", i + 1)))?;
        let key = key.trim().replace('-', "_");
        if key.is_empty() {
            return Err(Failure::usage(format!("config line {}: empty key", i + 1)));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Failure::usage(format!("config line {}: duplicate key '{key}'", i + 1)));
        }
    }
    Ok(out)
}

/// Resolves settings for one subcommand and records them.
#[derive(Debug)]
pub struct Settings {
    command: String,
    file: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
    resolved: Vec<(String, String)>,
}

impl Settings {
    pub fn new(command: &str, config: Option<&Path>) -> CliResult<Self> {
        let file = match config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
                parse_config(&text).map_err(|f| f.in_file(path))?
            }
            None => BTreeMap::new(),
        };
        if let Some(c) = file.get("command") {
            if c != command {
                return Err(Failure::usage(format!(
                    "config was written for '{c}', not '{command}'"
                )));
            }
        }
        let mut consumed = BTreeSet::new();
        consumed.insert("command".to_string());
        consumed.insert("version".to_string());
        Ok(Settings {
            command: command.to_string(),
            file,
            consumed,
            resolved: Vec::new(),
        })
    }

    fn file_value<T: FromStr>(&mut self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        self.consumed.insert(key.to_string());
        match self.file.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|e| Failure::usage(format!("config key '{key}': {e}"))),
        }
    }

    fn record(&mut self, key: &str, value: String) {
        self.resolved.push((key.to_string(), value));
    }

    /// Flag, then config file, then `default`.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let file = self.file_value(key)?;
        let value = flag.or(file).or(default);
        if let Some(v) = &value {
            self.record(key, v.to_string());
        }
        Ok(value)
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>, default: Option<T>) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.get(key, flag, default)?
            .ok_or_else(|| Failure::usage(format!("missing --{}", key.replace('_', "-"))))
    }

    /// Boolean switch: a flag can only turn it on.
    pub fn switch(&mut self, key: &str, flag: bool) -> CliResult<bool> {
        let file: Option<bool> = self.file_value(key)?;
        let value = flag || file.unwrap_or(false);
        self.record(key, value.to_string());
        Ok(value)
    }

    /// Comma-separated list in the file; a non-empty flag list replaces it.
    pub fn list<T>(&mut self, key: &str, flag: Vec<T>) -> CliResult<Vec<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let file: Option<String> = self.file_value(key)?;
        let values = if !flag.is_empty() {
            flag
        } else {
            match file {
                Some(s) if !s.trim().is_empty() => s
                    .split(',')
                    .map(|p| {
                        p.trim()
                            .parse()
                            .map_err(|e| Failure::usage(format!("config key '{key}': {e}")))
                    })
                    .collect::<CliResult<Vec<T>>>()?,
                _ => Vec::new(),
            }
        };
        let joined: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        self.record(key, joined.join(","));
        Ok(values)
    }

    /// Record a value derived during the run (e.g. data-dependent priors).
    pub fn note(&mut self, key: &str, value: impl Display) {
        self.resolved.retain(|(k, _)| k != key);
        self.record(key, value.to_string());
    }

    /// Fails on config keys that no setting asked for.
    pub fn finish(&self) -> CliResult<()> {
        let unknown: Vec<&str> = self
            .file
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Failure::usage(format!(
                "unknown config key(s) for '{}': {}",
                self.command,
                unknown.join(", ")
            )))
        }
    }

    pub fn manifest(&self) -> String {
        let mut out = format!(
            "# replay with: blockmax {} --config <this file>\ncommand={}\nversion={}\n",
            self.command,
            self.command,
            env!("CARGO_PKG_VERSION")
        );
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}
