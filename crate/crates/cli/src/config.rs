//! `key=value` config files and the flag > config > default overlay.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const SEED_ENV: &str = "VEKIT_SEED";

/// Every key any subcommand reads. Keys outside this list are rejected so
/// typos do not pass silently; known keys a subcommand does not use are
/// ignored, which lets one file serve several subcommands.
pub const KNOWN_KEYS: &[&str] = &[
    "snli",
    "split",
    "out",
    "on-error",
    "missing-image",
    "dataset",
    "format",
    "histogram",
    "arch",
    "features",
    "captions",
    "embeddings",
    "embed-dim",
    "hidden",
    "head-hidden",
    "rn-hidden",
    "epochs",
    "lr",
    "weight-decay",
    "batch-size",
    "eval-batch-size",
    "patience",
    "lr-factor",
    "lr-floor",
    "seed",
    "sequential",
    "checkpoint",
    "partition",
    "vocab",
    "predictions",
    "feature-file",
    "hypothesis",
    "pair-id",
];

/// Parses `key = value` lines. `#` starts a comment line; blank lines are
/// skipped; a repeated key is an error.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {}: expected key=value", i + 1)));
        };
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Usage(format!("config line {}: unknown key {key:?}", i + 1)));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!("config line {}: duplicate key {key:?}", i + 1)));
        }
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Resolves values for one subcommand and remembers them for the echo.
#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    env_seed: Option<String>,
    resolved: Vec<(String, String)>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>, env_seed: Option<String>) -> Self {
        Self {
            file,
            env_seed,
            resolved: Vec::new(),
        }
    }

    fn parse<T: FromStr>(key: &str, raw: &str, source: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        raw.parse()
            .map_err(|e| CliError::Usage(format!("{source} value {raw:?} for {key}: {e}")))
    }

    fn lookup<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        if key == "seed" {
            if let Some(raw) = &self.env_seed {
                return Self::parse(key, raw, SEED_ENV).map(Some);
            }
        }
        match self.file.get(key) {
            Some(raw) => Self::parse(key, raw, "config").map(Some),
            None => Ok(None),
        }
    }

    fn record(&mut self, key: &str, value: String) {
        self.resolved.push((key.to_string(), value));
    }

    pub fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?;
        self.record(key, v.as_ref().map_or_else(|| "(unset)".to_string(), |v| v.to_string()));
        Ok(v)
    }

    pub fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("--{key} is required (flag or config key)")))
    }

    pub fn or<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?.unwrap_or(default);
        self.record(key, v.to_string());
        Ok(v)
    }

    /// A switch: set by the flag, or by `true`/`false` in the config.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        self.or(key, flag.then_some(true), false)
    }

    /// Comma-separated list; flags replace the config value entirely.
    pub fn list(&mut self, key: &str, flag: Vec<String>) -> Result<Vec<String>, CliError> {
        let v: Vec<String> = if !flag.is_empty() {
            flag
        } else {
            self.file
                .get(key)
                .map(|raw| {
                    raw.split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect()
                })
                .unwrap_or_default()
        };
        self.record(key, v.join(","));
        Ok(v)
    }

    /// `key=value` lines in resolution order.
    pub fn echo(&self) -> String {
        self.resolved.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
