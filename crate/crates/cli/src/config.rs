//! `key=value` settings merged from a config file, `--seed` and trailing
//! command-line overrides, plus the WAV manifest format.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// Every key any command accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "amplitude",
    "basis",
    "batch_size",
    "beta1",
    "beta2",
    "burn_in",
    "cadam_sqrt_v",
    "cd_steps",
    "centered",
    "component_std",
    "components",
    "correlation",
    "deltas",
    "epochs",
    "eps",
    "estimate",
    "feature_kind",
    "features",
    "griffin_lim_iters",
    "hidden",
    "hop",
    "kind",
    "latent",
    "log_interval",
    "lr",
    "lr_im",
    "manifest",
    "method",
    "mode",
    "model",
    "momentum",
    "optimizer",
    "phase_mode",
    "reference",
    "sample_rate",
    "samples",
    "seconds",
    "seed",
    "spacing",
    "test_utterances",
    "train_utterances",
    "trajectory_alpha",
    "trajectory_iters",
    "wav",
    "window",
];

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    /// Keys whose current value came from the config file.
    from_file: BTreeSet<String>,
    /// Directory that relative paths from the config file resolve against.
    base: Option<PathBuf>,
}

fn split_pair(text: &str, origin: &str) -> CliResult<(String, String)> {
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("{origin}: expected KEY=VALUE, got `{text}`")))?;
    let key = key.trim();
    if !KNOWN_KEYS.contains(&key) {
        return Err(CliError::Config(format!("{origin}: unknown key `{key}`")));
    }
    Ok((key.to_string(), value.trim().to_string()))
}

impl Settings {
    /// File values, then `--seed`, then overrides; later sources win.
    pub fn load(file: Option<&Path>, seed: Option<u64>, overrides: &[String]) -> CliResult<Self> {
        let mut settings = Settings::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(crbm_core::Error::from)?;
            for (k, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = split_pair(line, &format!("{}:{}", path.display(), k + 1))?;
                settings.from_file.insert(key.clone());
                settings.values.insert(key, value);
            }
            settings.base = path.parent().map(Path::to_path_buf);
        }
        if let Some(seed) = seed {
            settings.from_file.remove("seed");
            settings.values.insert("seed".into(), seed.to_string());
        }
        for o in overrides {
            let (key, value) = split_pair(o, "command line")?;
            settings.from_file.remove(&key);
            settings.values.insert(key, value);
        }
        Ok(settings)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        self.values.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Config(format!("invalid value `{v}` for `{key}`"))),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> CliResult<usize> {
        self.parse(key, default)
    }

    pub fn u64(&self, key: &str, default: u64) -> CliResult<u64> {
        self.parse(key, default)
    }

    pub fn f64(&self, key: &str, default: f64) -> CliResult<f64> {
        let x: f64 = self.parse(key, default)?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(CliError::Config(format!("`{key}` must be finite")))
        }
    }

    pub fn bool(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(CliError::Config(format!("invalid boolean `{v}` for `{key}`"))),
        }
    }

    /// One of `choices`, defaulting to the first.
    pub fn choice(&self, key: &str, choices: &[&'static str]) -> CliResult<&'static str> {
        match self.get(key) {
            None => Ok(choices[0]),
            Some(v) => choices
                .iter()
                .copied()
                .find(|c| *c == v)
                .ok_or_else(|| CliError::Config(format!("`{key}` must be one of {}, got `{v}`", choices.join("|")))),
        }
    }

    fn resolve(&self, key: &str, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        match &self.base {
            Some(base) if p.is_relative() && self.from_file.contains(key) => base.join(p),
            _ => p,
        }
    }

    pub fn path(&self, key: &str) -> CliResult<PathBuf> {
        self.get(key)
            .map(|v| self.resolve(key, v))
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    /// Comma-separated list of paths.
    pub fn paths(&self, key: &str) -> CliResult<Vec<PathBuf>> {
        let raw = self
            .get(key)
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))?;
        let paths: Vec<PathBuf> = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| self.resolve(key, s))
            .collect();
        if paths.is_empty() {
            return Err(CliError::Config(format!("`{key}` lists no paths")));
        }
        Ok(paths)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Lines of `train PATH` or `test PATH`; `#` starts a comment and relative
/// paths resolve against the manifest's directory.
pub fn read_manifest(path: &Path) -> CliResult<Vec<(Split, PathBuf)>> {
    let text = fs::read_to_string(path).map_err(crbm_core::Error::from)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (split, file) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| CliError::Manifest(format!("{}:{}: expected `SPLIT PATH`", path.display(), k + 1)))?;
        let split = match split {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(CliError::Manifest(format!(
                    "{}:{}: unknown split `{other}`",
                    path.display(),
                    k + 1
                )))
            }
        };
        entries.push((split, base.join(file.trim())));
    }
    Ok(entries)
}

/// WAV inputs from `wav=` or from the given split of `manifest=`.
pub fn wav_inputs(settings: &Settings, split: Split) -> CliResult<Vec<PathBuf>> {
    match (settings.get("wav"), settings.get("manifest")) {
        (Some(_), None) => settings.paths("wav"),
        (None, Some(_)) => {
            let files: Vec<PathBuf> = read_manifest(&settings.path("manifest")?)?
                .into_iter()
                .filter(|(s, _)| *s == split)
                .map(|(_, p)| p)
                .collect();
            if files.is_empty() {
                return Err(CliError::Manifest(format!(
                    "manifest has no {} entries",
                    if split == Split::Train { "train" } else { "test" }
                )));
            }
            Ok(files)
        }
        (Some(_), Some(_)) => Err(CliError::Config("give either `wav` or `manifest`, not both".into())),
        (None, None) => Err(CliError::Config("missing input: set `wav` or `manifest`".into())),
    }
}
