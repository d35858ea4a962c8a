//! Flat key/value run configuration: one `key = value` per line, `#`
//! comments, every key optional. The CLI layers its flags on top by
//! calling [`RunConfig::set`] again after the file is read, so flags
//! always win.

use std::fs;
use std::path::Path;

use crate::data::ConditionTag;
use crate::encoders::Variant;
use crate::error::{Error, Result};
use crate::train::TrainConfig;

/// Union of everything a full gen → train → eval run needs. Defaults
/// reproduce the standard desk-scale recipe.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: String,
    pub variant: Variant,
    /// Discrete grid density: images per (color, shape) cell.
    pub n_per_combo: usize,
    /// Generate the continuous-color dataset instead of the discrete one.
    pub continuous: bool,
    /// Image count for the continuous dataset.
    pub n_images: usize,
    pub width: usize,
    pub height: usize,
    /// Empty means the kind's standard set: color/shape/both for
    /// discrete, continuous/shape for continuous.
    pub conditions: Vec<ConditionTag>,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub min_temperature: f64,
    pub k_shots: Vec<usize>,
    pub eval_seed: u64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        let train = TrainConfig::new(0);
        RunConfig {
            seed: 0,
            out: "runs/default".into(),
            variant: Variant::Clip,
            n_per_combo: 50,
            continuous: false,
            n_images: 800,
            width: 32,
            height: 32,
            conditions: Vec::new(),
            batch_size: train.batch_size,
            epochs: train.epochs,
            lr: train.base_lr,
            weight_decay: train.weight_decay,
            warmup_ratio: train.warmup_ratio,
            min_temperature: train.min_temperature,
            k_shots: vec![5, 10, 15],
            eval_seed: 0,
        }
    }
}

fn bad(key: &str, value: &str, wanted: &str) -> Error {
    Error::format("config", format!("key {key:?}: {value:?} is not {wanted}"))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, wanted: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad(key, value, wanted))
}

impl RunConfig {
    /// Defaults overlaid with a config file.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        let text = fs::read_to_string(path)?;
        for (number, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::format("config", format!("line {}: expected key = value", number + 1))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Apply one key/value pair; unknown keys are errors, not warnings,
    /// so a typo cannot silently fall back to a default.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value, "an unsigned integer")?,
            "out" => self.out = value.to_string(),
            "variant" => {
                self.variant = match value {
                    "clip" | "clip_style" => Variant::Clip,
                    "mllm" | "mllm_style" => Variant::Mllm,
                    _ => return Err(bad(key, value, "one of clip, mllm")),
                }
            }
            "n_per_combo" => self.n_per_combo = parse(key, value, "a count")?,
            "continuous" => self.continuous = parse(key, value, "true or false")?,
            "n_images" => self.n_images = parse(key, value, "a count")?,
            "width" => self.width = parse(key, value, "a pixel count")?,
            "height" => self.height = parse(key, value, "a pixel count")?,
            "conditions" => {
                self.conditions = value
                    .split(',')
                    .map(|c| match c.trim() {
                        "color" => Ok(ConditionTag::Color),
                        "shape" => Ok(ConditionTag::Shape),
                        "both" => Ok(ConditionTag::Both),
                        "continuous" => Ok(ConditionTag::Continuous),
                        other => {
                            Err(bad(key, other, "one of color, shape, both, continuous"))
                        }
                    })
                    .collect::<Result<_>>()?
            }
            "batch_size" => self.batch_size = parse(key, value, "a count")?,
            "epochs" => self.epochs = parse(key, value, "a count")?,
            "lr" => self.lr = parse(key, value, "a number")?,
            "weight_decay" => self.weight_decay = parse(key, value, "a number")?,
            "warmup_ratio" => self.warmup_ratio = parse(key, value, "a number")?,
            "min_temperature" => self.min_temperature = parse(key, value, "a number")?,
            "k_shots" => {
                self.k_shots = value
                    .split(',')
                    .map(|k| parse(key, k, "a comma-separated count list"))
                    .collect::<Result<_>>()?
            }
            "eval_seed" => self.eval_seed = parse(key, value, "an unsigned integer")?,
            _ => return Err(Error::format("config", format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// The condition set to generate/train/eval with.
    pub fn resolved_conditions(&self) -> Vec<ConditionTag> {
        if !self.conditions.is_empty() {
            return self.conditions.clone();
        }
        if self.continuous {
            vec![ConditionTag::Continuous, ConditionTag::Shape]
        } else {
            vec![ConditionTag::Color, ConditionTag::Shape, ConditionTag::Both]
        }
    }

    /// The training slice of this config.
    pub fn train_config(&self) -> TrainConfig {
        let mut train = TrainConfig::new(self.seed);
        train.batch_size = self.batch_size;
        train.epochs = self.epochs;
        train.base_lr = self.lr;
        train.weight_decay = self.weight_decay;
        train.warmup_ratio = self.warmup_ratio;
        train.min_temperature = self.min_temperature;
        train
    }
}

#[cfg(test)]
mod tests;
