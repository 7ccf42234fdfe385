//! `key = value` run configuration.
//!
//! Keys mirror [`TrainConfig`] field names plus the model shape (`hidden`,
//! `feature_dim`) and augmentation strengths. `#` starts a comment. Later
//! assignments win, so CLI overrides are applied after the file.

use std::str::FromStr;

use plsp_core::augment::AugmentSpec;
use plsp_core::model::ModelConfig;
use plsp_core::pldata::FeatureShape;
use plsp_core::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{origin}: {message}")]
pub struct ConfigError {
    pub origin: String,
    pub message: String,
}

/// Optional augmentation overrides; unset fields keep the defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentOverrides {
    pub flip_prob: Option<f64>,
    pub pad: Option<usize>,
    pub cutout: Option<usize>,
    pub weak_jitter: Option<f64>,
    pub strong_jitter: Option<f64>,
    pub strong_mask: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub augment: AugmentOverrides,
}

impl Default for RunConfig {
    fn default() -> Self {
        let standard = ModelConfig::standard(1, 3);
        Self {
            train: TrainConfig::default(),
            hidden: standard.hidden,
            feature_dim: standard.feature_dim,
            augment: AugmentOverrides::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse `{value}` for `{key}`"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let t = &mut self.train;
        let a = &mut self.augment;
        match key {
            "gamma0" => t.gamma0 = parse(key, value)?,
            "lambda0" => t.lambda0 = parse(key, value)?,
            "tau0" => t.tau0 = parse(key, value)?,
            "k" => t.k = parse(key, value)?,
            "pretrain_epochs" => t.pretrain_epochs = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "iterations" => t.iterations = parse(key, value)?,
            "batch_labeled" => t.batch_labeled = parse(key, value)?,
            "batch_unlabeled" => t.batch_unlabeled = parse(key, value)?,
            "learning_rate" | "lr" => t.sgd.learning_rate = parse(key, value)?,
            "momentum" => t.sgd.momentum = parse(key, value)?,
            "weight_decay" => t.sgd.weight_decay = parse(key, value)?,
            "beta" => t.beta = parse(key, value)?,
            "tau_floor" => t.tau_floor = parse(key, value)?,
            "eig_floor" => t.eig_floor = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "deterministic" => t.deterministic = parse(key, value)?,
            "hidden" => {
                self.hidden = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| parse(key, v.trim()))
                        .collect::<Result<_, _>>()?
                }
            }
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "flip_prob" => a.flip_prob = Some(parse(key, value)?),
            "pad" => a.pad = Some(parse(key, value)?),
            "cutout" => a.cutout = Some(parse(key, value)?),
            "weak_jitter" => a.weak_jitter = Some(parse(key, value)?),
            "strong_jitter" => a.strong_jitter = Some(parse(key, value)?),
            "strong_mask" => a.strong_mask = Some(parse(key, value)?),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Applies every assignment in `text`; `origin` names the source in errors.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message| ConfigError {
                origin: format!("{origin}:{}", no + 1),
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            self.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let err = |message| ConfigError {
            origin: format!("--set {assignment}"),
            message,
        };
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| err("expected key=value".to_string()))?;
        self.set(key.trim(), value.trim()).map_err(err)
    }

    pub fn model(&self, input_dim: usize, classes: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden: self.hidden.clone(),
            feature_dim: self.feature_dim,
            classes,
        }
    }

    /// The training configuration with augmentation overrides resolved for `shape`.
    pub fn resolved(&self, shape: FeatureShape) -> TrainConfig {
        let a = &self.augment;
        let mut t = self.train.clone();
        if *a != AugmentOverrides::default() {
            let mut weak = AugmentSpec::weak();
            let mut strong = AugmentSpec::strong(shape);
            for s in [&mut weak, &mut strong] {
                if let Some(v) = a.flip_prob {
                    s.flip_prob = v;
                }
                if let Some(v) = a.pad {
                    s.pad = v;
                }
            }
            if let Some(v) = a.cutout {
                strong.cutout_size = v;
            }
            if let Some(v) = a.weak_jitter {
                weak.vector_jitter_sigma = v;
            }
            if let Some(v) = a.strong_jitter {
                strong.vector_jitter_sigma = v;
            }
            if let Some(v) = a.strong_mask {
                strong.vector_mask_prob = v;
            }
            t.weak_augment = Some(weak);
            t.strong_augment = Some(strong);
        }
        t
    }
}
