//! `key = value` configuration with layered precedence.
//!
//! Layers, highest first: command-line flags, the `--config` file, the
//! manifest of the run a checkpoint came from, built-in defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::CliError;

/// Built-in defaults. `variant` deliberately has none.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("lambda", "0.5"),
    ("gamma", "0.2"),
    ("alpha_rule", "uniform_half"),
    ("batch_size", "64"),
    ("epochs", "10"),
    ("inner_steps", "1"),
    ("lr", "0.0001"),
    ("seed", "0"),
    ("data_seed", ""),
    ("mix_weight", "1"),
    ("dataset", "mnist"),
    ("classes", ""),
    ("per_class_cap", ""),
    ("image_size", "native"),
    ("data_root", "data"),
    ("blobs_k", "4"),
    ("blobs_dim", "2"),
    ("blobs_n_per_class", "250"),
    ("blobs_separation", "6"),
    ("family", "conv_paper"),
    ("latent_dim", "256"),
    ("base_channels", "32"),
    ("num_blocks", "3"),
    ("hidden", "256,64"),
    ("negative_slope", "0.2"),
    ("kmeans_restarts", "1000"),
    ("kmeans_max_iter", "300"),
    ("whiten_eps", "1e-8"),
    ("whiten_dims", "all"),
    ("cutoff", "40"),
    ("pairs", "16"),
    ("steps", "11"),
    ("deterministic", "on"),
];

/// Parse `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected `key = value`", no + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::Config(format!("{origin}:{}: empty key", no + 1)));
        }
        out.push((k.to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

pub fn read_kv_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_kv(&text, &path.display().to_string())
}

fn known(key: &str) -> bool {
    key == "variant" || DEFAULTS.iter().any(|(k, _)| *k == key)
}

/// Effective settings after layering.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn defaults() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Apply a layer on top. Unknown keys are rejected unless `lenient`,
    /// which is used for manifests that also carry bookkeeping entries.
    pub fn overlay(&mut self, pairs: &[(String, String)], lenient: bool) -> Result<(), CliError> {
        for (k, v) in pairs {
            if known(k) {
                self.values.insert(k.clone(), v.clone());
            } else if !lenient {
                return Err(CliError::Config(format!("unknown setting `{k}`")));
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_owned(), value.into());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn str(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key)
            .ok_or_else(|| CliError::Config(format!("`{key}` is not set by any flag, config file or default")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.str(key)?;
        raw.parse()
            .map_err(|e| CliError::Config(format!("bad value `{raw}` for `{key}`: {e}")))
    }

    /// Comma-separated list; empty means `None`.
    pub fn list(&self, key: &str) -> Result<Option<Vec<usize>>, CliError> {
        let raw = self.str(key)?;
        if raw.is_empty() || raw == "all" {
            return Ok(None);
        }
        raw.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad list `{raw}` for `{key}`")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Integer or one of the "unset" spellings.
    pub fn optional_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.str(key)? {
            "" | "all" | "none" | "native" => Ok(None),
            _ => self.parse(key).map(Some),
        }
    }

    pub fn flag_on(&self, key: &str) -> Result<bool, CliError> {
        match self.str(key)? {
            "on" | "true" | "1" => Ok(true),
            "off" | "false" | "0" => Ok(false),
            other => Err(CliError::Config(format!("`{key}` must be on or off, got `{other}`"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}
