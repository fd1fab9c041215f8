//! `key = value` run configuration for `seisr train`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use seisr::losses::{AdversarialMode, LossWeights};
use seisr::training::TrainConfig;

/// Every knob of a training run. Field names are the config-file keys.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    /// `None` starts the decay halfway through the run.
    pub decay_start_epoch: Option<usize>,
    pub total_epochs: usize,
    pub lambda_adv: f64,
    pub beta_pixel: f64,
    pub adversarial_mode: AdversarialMode,
    pub seed: u64,
    pub model_divisor: usize,
    pub checkpoint_every: usize,
    pub dataset: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// VGG-19 safetensors; without it the content term is disabled.
    pub vgg_weights: Option<PathBuf>,
    pub test_fraction: f64,
}

pub const KEYS: [&str; 16] = [
    "learning_rate",
    "batch_size",
    "beta1",
    "beta2",
    "decay_start_epoch",
    "total_epochs",
    "lambda_adv",
    "beta_pixel",
    "adversarial_mode",
    "seed",
    "model_divisor",
    "checkpoint_every",
    "dataset",
    "output_dir",
    "vgg_weights",
    "test_fraction",
];

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            beta1: t.beta1,
            beta2: t.beta2,
            decay_start_epoch: None,
            total_epochs: t.total_epochs,
            lambda_adv: t.weights.lambda_adv,
            beta_pixel: t.weights.beta_pixel,
            adversarial_mode: t.adversarial_mode,
            seed: t.seed,
            model_divisor: t.model_divisor,
            checkpoint_every: t.checkpoint_every,
            dataset: None,
            output_dir: None,
            vgg_weights: None,
            test_fraction: 0.2,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| anyhow!("{key}: cannot parse `{value}`: {e}"))
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "decay_start_epoch" => self.decay_start_epoch = if v == "auto" { None } else { Some(parse(key, v)?) },
            "total_epochs" => self.total_epochs = parse(key, v)?,
            "lambda_adv" => self.lambda_adv = parse(key, v)?,
            "beta_pixel" => self.beta_pixel = parse(key, v)?,
            "adversarial_mode" => self.adversarial_mode = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "model_divisor" => self.model_divisor = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "dataset" => self.dataset = optional_path(v),
            "output_dir" => self.output_dir = optional_path(v),
            "vgg_weights" => self.vgg_weights = optional_path(v),
            "test_fraction" => self.test_fraction = parse(key, v)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// Applies a config file on top of `self`. Blank lines and `#` comments
    /// are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            self.set(k.trim(), v).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text).with_context(|| format!("config {}", path.display()))
    }

    /// The effective configuration, every key in a fixed order.
    pub fn render(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let mut s = String::new();
        for key in KEYS {
            let value = match key {
                "learning_rate" => format!("{}", self.learning_rate),
                "batch_size" => self.batch_size.to_string(),
                "beta1" => format!("{}", self.beta1),
                "beta2" => format!("{}", self.beta2),
                "decay_start_epoch" => self.decay_start().to_string(),
                "total_epochs" => self.total_epochs.to_string(),
                "lambda_adv" => format!("{}", self.lambda_adv),
                "beta_pixel" => format!("{}", self.beta_pixel),
                "adversarial_mode" => self.adversarial_mode.to_string(),
                "seed" => self.seed.to_string(),
                "model_divisor" => self.model_divisor.to_string(),
                "checkpoint_every" => self.checkpoint_every.to_string(),
                "dataset" => path(&self.dataset),
                "output_dir" => path(&self.output_dir),
                "vgg_weights" => path(&self.vgg_weights),
                "test_fraction" => format!("{}", self.test_fraction),
                _ => unreachable!("KEYS and render disagree"),
            };
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }

    pub fn decay_start(&self) -> usize {
        self.decay_start_epoch.unwrap_or(self.total_epochs / 2)
    }

    /// Input paths named by the config must already exist.
    pub fn check_paths(&self) -> Result<()> {
        for (key, p) in [("dataset", &self.dataset), ("vgg_weights", &self.vgg_weights)] {
            if let Some(p) = p {
                if !p.exists() {
                    bail!("{key}: {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    /// The training hyperparameters, checkpointing into `checkpoint_dir`.
    pub fn train_config(&self, checkpoint_dir: PathBuf) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            beta1: self.beta1,
            beta2: self.beta2,
            decay_start_epoch: self.decay_start(),
            total_epochs: self.total_epochs,
            weights: LossWeights::new(self.lambda_adv, self.beta_pixel)?,
            adversarial_mode: self.adversarial_mode,
            seed: self.seed,
            model_divisor: self.model_divisor,
            checkpoint_every: self.checkpoint_every,
            checkpoint_dir: Some(checkpoint_dir),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
