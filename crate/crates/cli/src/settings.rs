//! `key = value` files and the defaults < config file < flags resolution.

use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::ArgMatches;
use crof_core::trainer::TrainConfig;
use crof_core::{CrofError, Result};

use crate::args::HyperArgs;

/// Keys that set a [`TrainConfig`] field.
pub const CONFIG_KEYS: &[&str] = &[
    "alpha",
    "beta",
    "gamma",
    "topk",
    "tau",
    "lambda",
    "lr",
    "weight_decay",
    "hidden_ratio",
    "epochs",
    "batch_size",
    "weighting",
    "base_loss",
    "noise",
    "delta",
    "seed",
    "tpg",
    "ft",
    "wt",
];

/// Input locations a config file may also carry.
pub const INPUT_KEYS: &[&str] = &["data", "noisy_labels", "text", "fused", "shots"];

/// Manifest bookkeeping, skipped when a manifest is read back as a config.
const META_KEYS: &[&str] = &["command", "version", "timestamp", "out"];

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split_once('#').map_or(line, |(before, _)| before).trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CrofError::Config(format!(
                "{}:{}: expected `key = value`",
                origin.display(),
                no + 1
            )));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| CrofError::storage(path, e))?;
    parse_kv(&text, path)
}

/// Looks up `key` in a `key = value` file.
pub fn kv_lookup(path: &Path, key: &str) -> Result<Option<String>> {
    Ok(read_kv(path)?
        .into_iter()
        .rev()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v))
}

fn parsed<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CrofError::Config(format!("bad value `{value}` for {key}")))
}

/// Sets one config field from its textual form.
pub fn apply(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "alpha" => cfg.alpha = parsed(key, value)?,
        "beta" => cfg.beta = parsed(key, value)?,
        "gamma" => cfg.gamma = parsed(key, value)?,
        "topk" => cfg.top_k = parsed(key, value)?,
        "tau" => cfg.tau = parsed(key, value)?,
        "lambda" => cfg.lambda = parsed(key, value)?,
        "lr" => cfg.lr = parsed(key, value)?,
        "weight_decay" => cfg.weight_decay = parsed(key, value)?,
        "hidden_ratio" => cfg.hidden_ratio = parsed(key, value)?,
        "epochs" => cfg.epochs = parsed(key, value)?,
        "batch_size" => cfg.batch_size = parsed(key, value)?,
        "weighting" => cfg.weighting = value.to_string(),
        "base_loss" => cfg.base_loss = value.to_string(),
        "noise" => cfg.noise.kind = value.to_string(),
        "delta" => cfg.noise.delta = parsed(key, value)?,
        "seed" => {
            cfg.seed = parsed(key, value)?;
            cfg.noise.seed = cfg.seed;
        }
        "tpg" => cfg.toggles.use_tpg = parsed(key, value)?,
        "ft" => cfg.toggles.use_ft = parsed(key, value)?,
        "wt" => cfg.toggles.use_wt = parsed(key, value)?,
        _ => return Err(CrofError::Config(format!("unknown config key `{key}`"))),
    }
    Ok(())
}

/// Every config field in the textual form `apply` accepts.
pub fn entries(cfg: &TrainConfig) -> Vec<(String, String)> {
    let t = cfg.toggles;
    [
        ("alpha", cfg.alpha.to_string()),
        ("beta", cfg.beta.to_string()),
        ("gamma", cfg.gamma.to_string()),
        ("topk", cfg.top_k.to_string()),
        ("tau", cfg.tau.to_string()),
        ("lambda", cfg.lambda.to_string()),
        ("lr", cfg.lr.to_string()),
        ("weight_decay", cfg.weight_decay.to_string()),
        ("hidden_ratio", cfg.hidden_ratio.to_string()),
        ("epochs", cfg.epochs.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("weighting", cfg.weighting.clone()),
        ("base_loss", cfg.base_loss.clone()),
        ("noise", cfg.noise.kind.clone()),
        ("delta", cfg.noise.delta.to_string()),
        ("seed", cfg.seed.to_string()),
        ("tpg", t.use_tpg.to_string()),
        ("ft", t.use_ft.to_string()),
        ("wt", t.use_wt.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// A fully resolved configuration plus any input paths it named.
#[derive(Debug, Clone, Default)]
pub struct Resolved {
    pub cfg: TrainConfig,
    pub inputs: Vec<(String, String)>,
}

impl Resolved {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if INPUT_KEYS.contains(&key) {
            self.inputs.retain(|(k, _)| k != key);
            self.inputs.push((key.to_string(), value.to_string()));
            Ok(())
        } else {
            apply(&mut self.cfg, key, value)
        }
    }

    pub fn input(&self, key: &str) -> Option<&str> {
        self.inputs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn input_path(&self, key: &str) -> Option<PathBuf> {
        self.input(key).map(PathBuf::from)
    }
}

fn given(matches: &ArgMatches, id: &str) -> bool {
    matches!(matches.value_source(id), Some(ValueSource::CommandLine))
}

fn hyper_flags(h: &HyperArgs) -> Vec<(&'static str, &'static str, String)> {
    vec![
        ("alpha", "alpha", h.alpha.to_string()),
        ("beta", "beta", h.beta.to_string()),
        ("gamma", "gamma", h.gamma.to_string()),
        ("topk", "topk", h.topk.to_string()),
        ("tau", "tau", h.tau.to_string()),
        ("lambda", "lambda", h.lambda.to_string()),
        ("lr", "lr", h.lr.to_string()),
        ("weight_decay", "weight_decay", h.weight_decay.to_string()),
        ("hidden_ratio", "hidden_ratio", h.hidden_ratio.to_string()),
        ("epochs", "epochs", h.epochs.to_string()),
        ("batch_size", "batch_size", h.batch_size.to_string()),
        ("weighting", "weighting", h.weighting.clone()),
        ("base_loss", "base_loss", h.base_loss.clone()),
        ("noise", "noise", h.noise.clone()),
    ]
}

/// Resolves built-in defaults < `--config` file < flags given on the command
/// line. `extra` lists further `(arg id, key, value)` flags of the subcommand.
pub fn resolve(
    hyper: &HyperArgs,
    extra: Vec<(&'static str, &'static str, String)>,
    matches: &ArgMatches,
) -> Result<Resolved> {
    let mut r = Resolved::default();
    if let Some(path) = &hyper.config {
        for (k, v) in read_kv(path)? {
            if META_KEYS.contains(&k.as_str()) {
                continue;
            }
            r.set(&k, &v).map_err(|e| match e {
                CrofError::Config(m) => CrofError::Config(format!("{}: {m}", path.display())),
                other => other,
            })?;
        }
    }
    for (id, key, value) in hyper_flags(hyper).into_iter().chain(extra) {
        if given(matches, id) {
            r.set(key, &value)?;
        }
    }
    Ok(r)
}
