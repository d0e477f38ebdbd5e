use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub fn uniform(w: f64) -> Self {
        Self {
            alpha: w,
            beta: w,
            gamma: w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.alpha, self.beta, self.gamma].iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::config("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub homogeneous: bool,
    pub epochs: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub decoder_penalty: f64,
    pub kl_scale: f64,
    pub adam: AdamConfig,
    /// Epochs after which a snapshot is taken (when a sink is provided).
    pub snapshot_epochs: Vec<usize>,
}

/// Named configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Synthetic modification scenarios: homogeneous, lr 1e-3, 30 epochs.
    Synthetic,
    /// Two genuine instruments: inhomogeneous, lr 3e-5, 10 epochs.
    TwoInstrument,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Preset::Synthetic),
            "two-instrument" => Ok(Preset::TwoInstrument),
            other => Err(Error::config(format!(
                "unknown preset `{other}` (expected `synthetic` or `two-instrument`)"
            ))),
        }
    }
}

/// Loss-term variants compared in the ablation, all with `gamma = 5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationArm {
    None,
    OdeOnly,
    AdversarialOnly,
    Both,
}

impl AblationArm {
    pub const ALL: [AblationArm; 4] = [
        AblationArm::None,
        AblationArm::OdeOnly,
        AblationArm::AdversarialOnly,
        AblationArm::Both,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationArm::None => "none",
            AblationArm::OdeOnly => "ode-only",
            AblationArm::AdversarialOnly => "adversarial-only",
            AblationArm::Both => "both",
        }
    }

    pub fn weights(self) -> LossWeights {
        let (alpha, beta) = match self {
            AblationArm::None => (0.0, 0.0),
            AblationArm::OdeOnly => (0.0, 5.0),
            AblationArm::AdversarialOnly => (5.0, 0.0),
            AblationArm::Both => (5.0, 5.0),
        };
        LossWeights { alpha, beta, gamma: 5.0 }
    }
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let (homogeneous, lr, epochs) = match preset {
            Preset::Synthetic => (true, 1e-3, 30),
            Preset::TwoInstrument => (false, 3e-5, 10),
        };
        Self {
            latent_dim: 2,
            homogeneous,
            epochs,
            seed: 0,
            weights: LossWeights::uniform(5.0),
            decoder_penalty: 0.01,
            kl_scale: 0.5,
            adam: AdamConfig::with_learning_rate(lr),
            snapshot_epochs: vec![1, 3, 5, 10, 25],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::config("latent dimension must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        self.weights.validate()?;
        self.adam.validate()?;
        for (name, v) in [("decoder_penalty", self.decoder_penalty), ("kl_scale", self.kl_scale)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// Partial configuration layered over a preset; every field optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub preset: Option<Preset>,
    pub latent_dim: Option<usize>,
    pub homogeneous: Option<bool>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub decoder_penalty: Option<f64>,
    pub kl_scale: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_epsilon: Option<f64>,
    pub snapshot_epochs: Option<Vec<usize>>,
}

impl TrainOverrides {
    /// Start from `preset` (or the one named here, else `synthetic`) and
    /// apply every present field.
    pub fn resolve(&self, preset: Option<Preset>) -> Result<TrainConfig> {
        let mut c = TrainConfig::preset(preset.or(self.preset).unwrap_or(Preset::Synthetic));
        macro_rules! set {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = self.$field.clone() {
                    c.$($target)+ = v;
                }
            };
        }
        set!(latent_dim => latent_dim);
        set!(homogeneous => homogeneous);
        set!(learning_rate => adam.learning_rate);
        set!(epochs => epochs);
        set!(seed => seed);
        set!(alpha => weights.alpha);
        set!(beta => weights.beta);
        set!(gamma => weights.gamma);
        set!(decoder_penalty => decoder_penalty);
        set!(kl_scale => kl_scale);
        set!(adam_beta1 => adam.beta1);
        set!(adam_beta2 => adam.beta2);
        set!(adam_epsilon => adam.epsilon);
        set!(snapshot_epochs => snapshot_epochs);
        c.validate()?;
        Ok(c)
    }
}

/// Every field set, so that resolving reproduces the configuration.
impl From<&TrainConfig> for TrainOverrides {
    fn from(c: &TrainConfig) -> Self {
        Self {
            preset: None,
            latent_dim: Some(c.latent_dim),
            homogeneous: Some(c.homogeneous),
            learning_rate: Some(c.adam.learning_rate),
            epochs: Some(c.epochs),
            seed: Some(c.seed),
            alpha: Some(c.weights.alpha),
            beta: Some(c.weights.beta),
            gamma: Some(c.weights.gamma),
            decoder_penalty: Some(c.decoder_penalty),
            kl_scale: Some(c.kl_scale),
            adam_beta1: Some(c.adam.beta1),
            adam_beta2: Some(c.adam.beta2),
            adam_epsilon: Some(c.adam.epsilon),
            snapshot_epochs: Some(c.snapshot_epochs.clone()),
        }
    }
}
