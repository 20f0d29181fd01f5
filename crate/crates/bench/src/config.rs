//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use sttc_core::backbone::{BackboneKind, RidgeMode};
use sttc_core::optim::{OptimizerKind, DEFAULT_LEARNING_RATE};
use sttc_core::scaler::ScalerMode;
use sttc_core::series::DatasetFormat;
use sttc_core::spectral::LossKind;
use sttc_core::stream::QueueRule;
use sttc_core::windows::SplitSpec;

use crate::error::{CliError, CliResult};

/// Keys left out of the fingerprint: they do not change what is measured.
const UNFINGERPRINTED: [&str; 2] = ["ttc", "out"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<String>,
    /// `None` picks the format from the file extension.
    pub format: Option<DatasetFormat>,
    pub synth_spec: Option<String>,
    pub lookback: usize,
    pub horizon: usize,
    pub split: SplitSpec,
    pub backbone: BackboneKind,
    /// `None` means samples per day from the dataset's sampling interval.
    pub period: Option<usize>,
    pub ridge_penalty: f64,
    pub ridge_mode: RidgeMode,
    pub ridge_max_windows: Option<usize>,
    pub scaler: ScalerMode,
    pub groups: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub clip_eps: Option<f64>,
    pub queue_rule: QueueRule,
    pub update_samples: usize,
    pub update_steps: usize,
    pub seed: u64,
    /// Latency budget per step; `None` uses the dataset's sampling interval.
    pub stride_secs: Option<f64>,
    pub mape_zero_eps: f64,
    pub backbone_file: Option<String>,
    pub descent_etas: Vec<f64>,
    pub ttc: bool,
    pub out: Option<String>,
    /// Relative paths resolve against this directory.
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            format: None,
            synth_spec: None,
            lookback: 12,
            horizon: 12,
            split: SplitSpec::default(),
            backbone: BackboneKind::SeasonalNaive,
            period: None,
            ridge_penalty: 1e-3,
            ridge_mode: RidgeMode::Shared,
            ridge_max_windows: None,
            scaler: ScalerMode::Global,
            groups: 4,
            lr: DEFAULT_LEARNING_RATE,
            optimizer: OptimizerKind::Adam,
            loss: LossKind::Mae,
            clip_eps: None,
            queue_rule: QueueRule::Strict,
            update_samples: 1,
            update_steps: 1,
            seed: 0,
            stride_secs: None,
            mape_zero_eps: sttc_core::metrics::DEFAULT_MAPE_ZERO_EPS,
            backbone_file: None,
            descent_etas: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
            ttc: true,
            out: None,
            base_dir: PathBuf::from("."),
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key} = {value}: {why}"))
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| bad(key, value, e))
}

fn optional(value: &str) -> Option<&str> {
    match value {
        "" | "none" | "auto" => None,
        v => Some(v),
    }
}

fn parse_list(key: &str, value: &str) -> CliResult<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse::<f64>(key, v.trim()))
        .collect()
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), T::to_string)
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Reads a config file; blank lines and `#` comments are ignored.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_text(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> CliResult<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override '{pair}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "dataset" => self.dataset = optional(value).map(str::to_string),
            "format" => {
                self.format = optional(value).map(|v| parse(key, v)).transpose()?;
            }
            "synth_spec" => self.synth_spec = optional(value).map(str::to_string),
            "lookback" => self.lookback = parse(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "split" => {
                let r = parse_list(key, value)?;
                if r.len() != 3 {
                    return Err(bad(key, value, "expected train,val,test"));
                }
                self.split = SplitSpec::new(r[0], r[1], r[2]).map_err(|e| bad(key, value, e))?;
            }
            "backbone" => self.backbone = parse(key, value)?,
            "period" => self.period = optional(value).map(|v| parse(key, v)).transpose()?,
            "ridge_penalty" => self.ridge_penalty = parse(key, value)?,
            "ridge_mode" => self.ridge_mode = parse(key, value)?,
            "ridge_max_windows" => {
                self.ridge_max_windows = optional(value).map(|v| parse(key, v)).transpose()?
            }
            "scaler" => self.scaler = parse(key, value)?,
            "groups" => self.groups = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "optimizer" => self.optimizer = parse(key, value)?,
            "loss" => self.loss = parse(key, value)?,
            "clip_eps" => self.clip_eps = optional(value).map(|v| parse(key, v)).transpose()?,
            "queue_rule" => self.queue_rule = parse(key, value)?,
            "update_samples" => self.update_samples = parse(key, value)?,
            "update_steps" => self.update_steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "stride_secs" => self.stride_secs = optional(value).map(|v| parse(key, v)).transpose()?,
            "mape_zero_eps" => self.mape_zero_eps = parse(key, value)?,
            "backbone_file" => self.backbone_file = optional(value).map(str::to_string),
            "descent_etas" => self.descent_etas = parse_list(key, value)?,
            "ttc" => {
                self.ttc = match value {
                    "on" | "true" | "1" => true,
                    "off" | "false" | "0" => false,
                    _ => return Err(bad(key, value, "expected on or off")),
                }
            }
            "out" => self.out = optional(value).map(str::to_string),
            other => return Err(CliError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        let fail = |m: &str| Err(CliError::Config(m.to_string()));
        if self.lookback == 0 || self.horizon < 2 {
            return fail("lookback must be >= 1 and horizon >= 2");
        }
        if self.groups == 0 {
            return fail("groups must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if self.ridge_penalty.is_nan() || self.ridge_penalty < 0.0 {
            return fail("ridge_penalty must be non-negative");
        }
        if self.update_samples == 0 || self.update_steps == 0 {
            return fail("update_samples and update_steps must be >= 1");
        }
        if self.clip_eps.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return fail("clip_eps must be positive");
        }
        if self.stride_secs.is_some_and(|s| s.is_nan() || s <= 0.0) {
            return fail("stride_secs must be positive");
        }
        if self.dataset.is_none() && self.synth_spec.is_none() {
            return fail("either dataset or synth_spec must be set");
        }
        if self.dataset.is_some() && self.synth_spec.is_some() {
            return fail("dataset and synth_spec are mutually exclusive");
        }
        self.split.validate().map_err(CliError::from)
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Every key with its canonical value, in a fixed order.
    pub fn canonical(&self) -> Vec<(&'static str, String)> {
        let s = &self.split;
        vec![
            ("dataset", opt_str(&self.dataset)),
            ("format", opt_str(&self.format)),
            ("synth_spec", opt_str(&self.synth_spec)),
            ("lookback", self.lookback.to_string()),
            ("horizon", self.horizon.to_string()),
            ("split", join(&[s.train, s.val, s.test])),
            ("backbone", self.backbone.to_string()),
            ("period", opt_str(&self.period)),
            ("ridge_penalty", self.ridge_penalty.to_string()),
            ("ridge_mode", self.ridge_mode.to_string()),
            ("ridge_max_windows", opt_str(&self.ridge_max_windows)),
            ("scaler", self.scaler.to_string()),
            ("groups", self.groups.to_string()),
            ("lr", self.lr.to_string()),
            ("optimizer", self.optimizer.to_string()),
            ("loss", self.loss.to_string()),
            ("clip_eps", opt_str(&self.clip_eps)),
            ("queue_rule", self.queue_rule.to_string()),
            ("update_samples", self.update_samples.to_string()),
            ("update_steps", self.update_steps.to_string()),
            ("seed", self.seed.to_string()),
            ("stride_secs", opt_str(&self.stride_secs)),
            ("mape_zero_eps", self.mape_zero_eps.to_string()),
            ("backbone_file", opt_str(&self.backbone_file)),
            ("descent_etas", join(&self.descent_etas)),
            ("ttc", if self.ttc { "on" } else { "off" }.to_string()),
            ("out", opt_str(&self.out)),
        ]
    }

    /// Canonical config for reports; the output path is left out so that
    /// identical runs written to different files stay byte-identical.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.canonical()
            .into_iter()
            .filter(|(k, _)| *k != "out")
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    /// SHA-256 of the canonical config without `ttc` and `out`.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.canonical() {
            if !UNFINGERPRINTED.contains(&k) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}
