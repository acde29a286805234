use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalcls::EvalConfig;
use crate::losses::LossWeights;
use crate::model::{ModelDims, DEFAULT_INIT_SCALE, DEFAULT_LEAKY_SLOPE};

/// Subset of the stages {1, 2, 3}. Serialized as a sorted list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct StageMask(u8);

impl StageMask {
    pub const ALL: StageMask = StageMask(0b111);

    pub fn new(stages: &[u8]) -> Result<Self> {
        let mut bits = 0u8;
        for &s in stages {
            if !(1..=3).contains(&s) {
                return Err(Error::Config(format!("unknown stage {s}; stages are 1, 2 and 3")));
            }
            bits |= 1 << (s - 1);
        }
        if bits == 0 {
            return Err(Error::Config("stage mask must name at least one stage".into()));
        }
        Ok(StageMask(bits))
    }

    pub fn contains(self, stage: u8) -> bool {
        (1..=3).contains(&stage) && self.0 & (1 << (stage - 1)) != 0
    }

    pub fn stages(self) -> Vec<u8> {
        (1..=3).filter(|&s| self.contains(s)).collect()
    }
}

impl TryFrom<Vec<u8>> for StageMask {
    type Error = Error;

    fn try_from(v: Vec<u8>) -> Result<Self> {
        StageMask::new(&v)
    }
}

impl From<StageMask> for Vec<u8> {
    fn from(m: StageMask) -> Self {
        m.stages()
    }
}

impl FromStr for StageMask {
    type Err = Error;

    /// Accepts `"1,3"`, `"13"` or `"1 3"`.
    fn from_str(s: &str) -> Result<Self> {
        let digits: Vec<u8> = s
            .chars()
            .filter(|c| !matches!(c, ',' | ' '))
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::Config(format!("bad stage list {s:?}")))
            })
            .collect::<Result<_>>()?;
        StageMask::new(&digits)
    }
}

impl fmt::Display for StageMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.stages().iter().map(u8::to_string).collect();
        f.write_str(&s.join(","))
    }
}

/// Named training configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ablation {
    Full,
    Stg1,
    Stg3,
    NoStg1,
    NoStg2,
    NoStg3,
    /// Single conditional generator fed raw noise, with both critics.
    Baseline,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::Full,
        Ablation::Stg1,
        Ablation::Stg3,
        Ablation::NoStg1,
        Ablation::NoStg2,
        Ablation::NoStg3,
        Ablation::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::Stg1 => "Stg1",
            Ablation::Stg3 => "Stg3",
            Ablation::NoStg1 => "-Stg1",
            Ablation::NoStg2 => "-Stg2",
            Ablation::NoStg3 => "-Stg3",
            Ablation::Baseline => "baseline",
        }
    }

    pub fn stage_mask(self) -> StageMask {
        let s: &[u8] = match self {
            Ablation::Full => &[1, 2, 3],
            Ablation::Stg1 => &[1],
            Ablation::Stg3 => &[3],
            Ablation::NoStg1 => &[2, 3],
            Ablation::NoStg2 => &[1, 3],
            Ablation::NoStg3 => &[1, 2],
            Ablation::Baseline => &[1, 3],
        };
        StageMask::new(s).unwrap()
    }

    pub fn is_baseline(self) -> bool {
        self == Ablation::Baseline
    }

    /// `config` with this ablation's stage mask and architecture.
    pub fn apply(self, config: &TrainConfig) -> TrainConfig {
        TrainConfig {
            stage_mask: self.stage_mask(),
            baseline_mode: self.is_baseline(),
            ..config.clone()
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = Ablation::ALL.iter().map(|a| a.name()).collect();
                Error::Usage(format!("unknown ablation {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageEpochs {
    pub e1: usize,
    pub e2: usize,
    pub e3: usize,
}

impl Default for StageEpochs {
    fn default() -> Self {
        StageEpochs { e1: 30, e2: 10, e3: 10 }
    }
}

impl StageEpochs {
    pub fn get(&self, stage: u8) -> usize {
        match stage {
            1 => self.e1,
            2 => self.e2,
            _ => self.e3,
        }
    }
}

/// What the reconstruction term regresses from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecTarget {
    /// Generated conditional features.
    #[default]
    Generated,
    /// Random interpolates between real and generated features.
    Interpolated,
}

/// Network sizes not fixed by the data, plus initialization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub noise_dim: usize,
    pub prior_dim: usize,
    pub hidden_dim: usize,
    pub init_scale: f64,
    pub leaky_slope: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            noise_dim: 16,
            prior_dim: 32,
            hidden_dim: 128,
            init_scale: DEFAULT_INIT_SCALE,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl ModelSettings {
    pub fn dims(&self, feature_dim: usize, embed_dim: usize) -> ModelDims {
        ModelDims {
            noise_dim: self.noise_dim,
            prior_dim: self.prior_dim,
            hidden_dim: self.hidden_dim,
            feature_dim,
            embed_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Critic updates per generator update.
    pub k: usize,
    pub batch_size: usize,
    pub epochs: StageEpochs,
    pub learning_rate: f64,
    /// Learning rate for stages 2 and 3; `learning_rate` when absent.
    pub finetune_learning_rate: Option<f64>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub loss: LossWeights,
    pub seed: u64,
    pub stage_mask: StageMask,
    pub baseline_mode: bool,
    /// Stop the conditional generator's gradient at the prior `s = G1(z)`.
    pub block_prior_grad: bool,
    pub rec_target: RecTarget,
    /// Ridge coefficient of the closed-form attribute regressor.
    pub ridge: f64,
    /// Class-balanced batches in stage 1.
    pub balanced_batches: bool,
    pub model: ModelSettings,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 5,
            batch_size: 64,
            epochs: StageEpochs::default(),
            learning_rate: 1e-4,
            finetune_learning_rate: None,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            adam_eps: 1e-8,
            loss: LossWeights::default(),
            seed: 0,
            stage_mask: StageMask::ALL,
            baseline_mode: false,
            block_prior_grad: true,
            rec_target: RecTarget::Generated,
            ridge: 1e-3,
            balanced_batches: true,
            model: ModelSettings::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Settings used for the bundled synthetic benchmark: a larger step
    /// and reconstruction weight suit its small networks and short budget.
    pub fn synthetic_benchmark() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            loss: LossWeights {
                rec_beta: 0.1,
                ..LossWeights::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        for (name, lr) in [("learning_rate", Some(self.learning_rate)), ("finetune_learning_rate", self.finetune_learning_rate)] {
            if let Some(lr) = lr {
                if !(lr >= 0.0 && lr.is_finite()) {
                    return Err(Error::Config(format!("{name} {lr} must be finite and >= 0")));
                }
            }
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config(format!("ridge {} must be >= 0", self.ridge)));
        }
        if self.baseline_mode && self.stage_mask.contains(2) {
            return Err(Error::Config(
                "baseline mode has no unconditional generator, so stage 2 cannot run".into(),
            ));
        }
        self.loss.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    pub fn stage_learning_rate(&self, stage: u8) -> f64 {
        match (stage, self.finetune_learning_rate) {
            (2 | 3, Some(lr)) => lr,
            _ => self.learning_rate,
        }
    }
}
