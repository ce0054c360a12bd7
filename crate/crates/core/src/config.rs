//! Run configuration: a TOML file with `[input]`, `[network]`, `[sampler]`,
//! `[train]` and `[output]` sections. Every key can also be set by name as
//! `section.key`, which is how command-line overrides are applied.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::network::{Activation, FourierFeatures, NetworkConfig};
use crate::sampler::{SamplerConfig, Scheduler, Strategy};
use crate::trainer::{OptimizerKind, RunSettings, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Image,
    Audio,
}

impl InputKind {
    pub fn name(self) -> &'static str {
        match self {
            InputKind::Image => "image",
            InputKind::Audio => "audio",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputConfig {
    pub path: PathBuf,
    pub kind: InputKind,
    pub grayscale: bool,
}

/// Everything `fit` needs. Network input/output widths are filled in from
/// the loaded signal.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: InputConfig,
    pub settings: RunSettings,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: InputConfig {
                path: PathBuf::new(),
                kind: InputKind::Image,
                grayscale: false,
            },
            settings: RunSettings {
                network: NetworkConfig::siren(5, 256, 2, 1),
                sampler: SamplerConfig::default(),
                train: TrainConfig::default(),
            },
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Every recognized `section.key`.
pub const KEYS: &[&str] = &[
    "input.path",
    "input.modality",
    "input.grayscale",
    "network.depth",
    "network.width",
    "network.activation",
    "network.omega0",
    "network.fourier_count",
    "network.fourier_scale",
    "network.init_seed",
    "sampler.strategy",
    "sampler.batch_fraction",
    "sampler.xi",
    "sampler.alpha",
    "sampler.lambda_decay",
    "sampler.scheduler",
    "sampler.seed",
    "train.learning_rate",
    "train.iterations",
    "train.optimizer",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.eval_every",
    "train.snapshot_every",
    "train.thresholds",
    "output.dir",
];

fn type_error(key: &str, expected: &str, value: &Value) -> Error {
    Error::Config(format!("{key}: expected {expected}, got `{value}`"))
}

fn as_float(key: &str, value: &Value) -> Result<f64> {
    match value {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(type_error(key, "a number", other)),
    }
}

fn as_usize(key: &str, value: &Value) -> Result<usize> {
    match value {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        other => Err(type_error(key, "a nonnegative integer", other)),
    }
}

fn as_u64(key: &str, value: &Value) -> Result<u64> {
    match value {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::String(s) => s
            .parse()
            .map_err(|_| type_error(key, "a 64-bit unsigned integer", value)),
        other => Err(type_error(key, "a 64-bit unsigned integer", other)),
    }
}

fn as_str<'a>(key: &str, value: &'a Value) -> Result<&'a str> {
    value.as_str().ok_or_else(|| type_error(key, "a string", value))
}

fn as_bool(key: &str, value: &Value) -> Result<bool> {
    value.as_bool().ok_or_else(|| type_error(key, "true or false", value))
}

fn adam_field(train: &mut TrainConfig, key: &str, value: f64) -> Result<()> {
    let OptimizerKind::Adam { beta1, beta2, eps } = &mut train.optimizer else {
        return Err(Error::Config(format!(
            "{key} only applies to train.optimizer = \"adam\""
        )));
    };
    match key {
        "train.beta1" => *beta1 = value,
        "train.beta2" => *beta2 = value,
        _ => *eps = value,
    }
    Ok(())
}

/// Parses override text as a TOML value, falling back to a bare string.
pub fn parse_value(text: &str) -> Value {
    format!("v = {text}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_string()))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &Value) -> Result<()> {
        let net = &mut self.settings.network;
        let sampler = &mut self.settings.sampler;
        let train = &mut self.settings.train;
        match key {
            "input.path" => self.input.path = PathBuf::from(as_str(key, value)?),
            "input.modality" => {
                self.input.kind = match as_str(key, value)? {
                    "image" => InputKind::Image,
                    "audio" => InputKind::Audio,
                    other => return Err(Error::Config(format!("{key}: unknown modality `{other}`"))),
                }
            }
            "input.grayscale" => self.input.grayscale = as_bool(key, value)?,
            "network.depth" => net.depth = as_usize(key, value)?,
            "network.width" => net.width = as_usize(key, value)?,
            "network.activation" => net.activation = Activation::parse(as_str(key, value)?)?,
            "network.omega0" => net.omega0 = as_float(key, value)?,
            "network.fourier_count" => {
                let count = as_usize(key, value)?;
                let scale = net.fourier_features.map_or(10.0, |f| f.scale);
                net.fourier_features = (count > 0).then_some(FourierFeatures { count, scale });
            }
            "network.fourier_scale" => {
                let scale = as_float(key, value)?;
                if let Some(ff) = &mut net.fourier_features {
                    ff.scale = scale;
                } else {
                    net.fourier_features = Some(FourierFeatures { count: 0, scale });
                }
            }
            "network.init_seed" => net.init_seed = as_u64(key, value)?,
            "sampler.strategy" => sampler.strategy = as_str(key, value)?.parse::<Strategy>()?,
            "sampler.batch_fraction" => sampler.batch_fraction = as_float(key, value)?,
            "sampler.xi" => sampler.xi = as_float(key, value)?,
            "sampler.alpha" => sampler.alpha = as_usize(key, value)?,
            "sampler.lambda_decay" => sampler.lambda_decay = as_float(key, value)?,
            "sampler.scheduler" => sampler.scheduler = as_str(key, value)?.parse::<Scheduler>()?,
            "sampler.seed" => sampler.seed = as_u64(key, value)?,
            "train.learning_rate" => train.learning_rate = as_float(key, value)?,
            "train.iterations" => train.iterations = as_usize(key, value)?,
            "train.optimizer" => {
                train.optimizer = match as_str(key, value)? {
                    "sgd" => OptimizerKind::Sgd,
                    "adam" if matches!(train.optimizer, OptimizerKind::Adam { .. }) => train.optimizer,
                    "adam" => OptimizerKind::adam(),
                    other => return Err(Error::Config(format!("{key}: unknown optimizer `{other}`"))),
                }
            }
            "train.beta1" | "train.beta2" | "train.eps" => adam_field(train, key, as_float(key, value)?)?,
            "train.eval_every" => train.eval_every = as_usize(key, value)?,
            "train.snapshot_every" => train.snapshot_every = as_usize(key, value)?,
            "train.thresholds" => {
                let items = value
                    .as_array()
                    .ok_or_else(|| type_error(key, "an array of numbers", value))?;
                train.thresholds = items.iter().map(|v| as_float(key, v)).collect::<Result<_>>()?;
            }
            "output.dir" => self.output_dir = PathBuf::from(as_str(key, value)?),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `section.key` / raw value text pairs in order.
    pub fn apply_overrides<'a>(&mut self, overrides: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (key, text) in overrides {
            self.set(key, &parse_value(text))?;
        }
        Ok(())
    }

    /// Parses TOML text on top of the defaults. The Adam hyperparameters are
    /// applied after `train.optimizer` whatever their order in the file.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut config = RunConfig::default();
        let mut deferred = Vec::new();
        for (section, body) in &table {
            let body = body
                .as_table()
                .ok_or_else(|| Error::Config(format!("`{section}` must be a [section]")))?;
            for (name, value) in body {
                let key = format!("{section}.{name}");
                if matches!(
                    key.as_str(),
                    "train.beta1" | "train.beta2" | "train.eps" | "network.fourier_scale"
                ) {
                    deferred.push((key, value));
                } else {
                    config.set(&key, value)?;
                }
            }
        }
        for (key, value) in deferred {
            config.set(&key, value)?;
        }
        Ok(config)
    }

    /// Loads a config file; a relative `input.path` is taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        if config.input.path.is_relative() && !config.input.path.as_os_str().is_empty() {
            if let Some(dir) = path.parent() {
                config.input.path = dir.join(&config.input.path);
            }
        }
        Ok(config)
    }

    /// Checks settings that do not depend on the loaded signal.
    pub fn validate(&self) -> Result<()> {
        if self.input.path.as_os_str().is_empty() {
            return Err(Error::Config("input.path is required".into()));
        }
        if let Some(ff) = self.settings.network.fourier_features {
            if ff.count == 0 {
                return Err(Error::Config(
                    "network.fourier_scale needs network.fourier_count >= 1".into(),
                ));
            }
        }
        self.settings.train.validate()?;
        self.settings.sampler.validate(usize::MAX)
    }

    /// Serializes every key, so that loading the output reproduces `self`.
    pub fn to_toml(&self) -> String {
        let s = &self.settings;
        let string = |v: &str| Value::String(v.to_string()).to_string();
        let float = |v: f64| format!("{v:?}");
        let seed = |v: u64| i64::try_from(v).map_or_else(|_| string(&v.to_string()), |i| i.to_string());
        let mut out = String::new();
        let _ = writeln!(out, "[input]");
        let _ = writeln!(out, "path = {}", string(&self.input.path.to_string_lossy()));
        let _ = writeln!(out, "modality = {}", string(self.input.kind.name()));
        let _ = writeln!(out, "grayscale = {}", self.input.grayscale);
        let _ = writeln!(out, "\n[network]");
        let _ = writeln!(out, "depth = {}", s.network.depth);
        let _ = writeln!(out, "width = {}", s.network.width);
        let _ = writeln!(out, "activation = {}", string(s.network.activation.name()));
        let _ = writeln!(out, "omega0 = {}", float(s.network.omega0));
        if let Some(ff) = s.network.fourier_features {
            let _ = writeln!(out, "fourier_count = {}", ff.count);
            let _ = writeln!(out, "fourier_scale = {}", float(ff.scale));
        }
        let _ = writeln!(out, "init_seed = {}", seed(s.network.init_seed));
        let _ = writeln!(out, "\n[sampler]");
        let _ = writeln!(out, "strategy = {}", string(s.sampler.strategy.name()));
        let _ = writeln!(out, "batch_fraction = {}", float(s.sampler.batch_fraction));
        let _ = writeln!(out, "xi = {}", float(s.sampler.xi));
        let _ = writeln!(out, "alpha = {}", s.sampler.alpha);
        let _ = writeln!(out, "lambda_decay = {}", float(s.sampler.lambda_decay));
        let _ = writeln!(out, "scheduler = {}", string(s.sampler.scheduler.name()));
        let _ = writeln!(out, "seed = {}", seed(s.sampler.seed));
        let _ = writeln!(out, "\n[train]");
        let _ = writeln!(out, "learning_rate = {}", float(s.train.learning_rate));
        let _ = writeln!(out, "iterations = {}", s.train.iterations);
        let _ = writeln!(out, "optimizer = {}", string(s.train.optimizer.name()));
        if let OptimizerKind::Adam { beta1, beta2, eps } = s.train.optimizer {
            let _ = writeln!(out, "beta1 = {}", float(beta1));
            let _ = writeln!(out, "beta2 = {}", float(beta2));
            let _ = writeln!(out, "eps = {}", float(eps));
        }
        let _ = writeln!(out, "eval_every = {}", s.train.eval_every);
        let _ = writeln!(out, "snapshot_every = {}", s.train.snapshot_every);
        let thresholds: Vec<String> = s.train.thresholds.iter().map(|&t| float(t)).collect();
        let _ = writeln!(out, "thresholds = [{}]", thresholds.join(", "));
        let _ = writeln!(out, "\n[output]");
        let _ = writeln!(out, "dir = {}", string(&self.output_dir.to_string_lossy()));
        out
    }

    /// Sets both the initialization and the sampling seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.settings.network.init_seed = seed;
        self.settings.sampler.seed = seed;
    }
}
