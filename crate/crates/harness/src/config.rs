//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use milpbranch_core::gen::{Family, Preset};
use milpbranch_learn::adversary::{AugmenterAlgorithm, AugmenterConfig, Proportions};
use milpbranch_learn::policy::{IlConfig, RlConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Plain imitation learning.
    Il,
    /// Plain REINFORCE on the branching MDP.
    Rl,
    AdasolverIl,
    AdasolverRl,
    /// Random masks with the same operators and proportions; no learned
    /// augmenter and no discriminator.
    Ra,
    /// AdaSolver with a REINFORCE-trained augmenter.
    Reinforce,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Il => "il",
            Mode::Rl => "rl",
            Mode::AdasolverIl => "adasolver-il",
            Mode::AdasolverRl => "adasolver-rl",
            Mode::Ra => "ra",
            Mode::Reinforce => "reinforce",
        }
    }

    pub fn is_rl(self) -> bool {
        matches!(self, Mode::Rl | Mode::AdasolverRl)
    }

    pub fn augments(self) -> bool {
        !matches!(self, Mode::Il | Mode::Rl)
    }

    /// Whether the augmenter and discriminator are trained.
    pub fn learns_augmenter(self) -> bool {
        matches!(self, Mode::AdasolverIl | Mode::AdasolverRl | Mode::Reinforce)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub instances: PathBuf,
    pub datasets: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            instances: "runs/instances".into(),
            datasets: "runs/datasets".into(),
            checkpoints: "runs/checkpoints".into(),
            reports: "runs/reports".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub node_limit: usize,
    /// Seconds per solve.
    pub time_limit: Option<f64>,
    /// Gap charged before the first incumbent when no heuristic primal
    /// value exists.
    pub gap_cap: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { node_limit: 20_000, time_limit: None, gap_cap: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    /// Epochs `N`.
    pub epochs: usize,
    /// Instances run by the RL agent per epoch.
    pub instances_per_epoch: usize,
    /// First epoch (1-based) that augments.
    pub augment_from: usize,
    /// Instances augmented per epoch.
    pub k1: usize,
    /// Cap on expert samples collected from augmented instances per epoch.
    pub k2: usize,
    /// Original and augmented samples drawn for each IL epoch.
    pub original_per_epoch: usize,
    pub augmented_per_epoch: usize,
    /// RL: augment every this many epochs.
    pub rl_augment_every: usize,
    /// Node cap when collecting expert samples on augmented instances.
    pub collect_node_limit: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            epochs: 100,
            instances_per_epoch: 10,
            augment_from: 10,
            k1: 100,
            k2: 5000,
            original_per_epoch: 10_000,
            augmented_per_epoch: 2000,
            rl_augment_every: 10,
            collect_node_limit: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Every random stream derives from this.
    pub seed: u64,
    pub mode: Mode,
    pub family: Family,
    pub preset: Preset,
    pub paths: Paths,
    pub schedule: Schedule,
    pub limits: Limits,
    pub clock: Clock,
    pub hidden: usize,
    pub il: IlConfig,
    pub rl: RlConfig,
    pub augmenter: AugmenterConfig,
    /// Masking proportions; the family default when absent.
    pub proportions: Option<Proportions>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            mode: Mode::Il,
            family: Family::SetCovering,
            preset: Preset::Desk,
            paths: Paths::default(),
            schedule: Schedule::default(),
            limits: Limits::default(),
            clock: Clock::Nodes,
            hidden: 64,
            il: IlConfig::default(),
            rl: RlConfig::default(),
            augmenter: AugmenterConfig { batch: 4, lr: 1e-3, ..AugmenterConfig::default() },
            proportions: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn proportions(&self) -> Proportions {
        self.proportions.unwrap_or_else(|| Proportions::for_family(self.family))
    }

    /// Augmenter settings with the run's seed, proportions and algorithm.
    pub fn augmenter_config(&self) -> AugmenterConfig {
        AugmenterConfig {
            proportions: self.proportions(),
            algorithm: if self.mode == Mode::Reinforce { AugmenterAlgorithm::Reinforce } else { AugmenterAlgorithm::Ppo },
            hidden: self.hidden,
            seed: self.seed.wrapping_add(0xa11ce),
            ..self.augmenter
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.limits.node_limit == 0 {
            return bad("limits.node_limit must be positive");
        }
        if self.limits.time_limit.is_some_and(|t| !(t > 0.0)) {
            return bad("limits.time_limit must be positive");
        }
        if self.schedule.epochs == 0 {
            return bad("schedule.epochs must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        self.augmenter_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// `K <= |training set|`.
    pub fn check_training_size(&self, n: usize) -> Result<(), ConfigError> {
        let k = if self.mode.is_rl() { self.schedule.instances_per_epoch } else { self.schedule.k1 };
        if self.mode.augments() || self.mode.is_rl() {
            if k > n {
                return Err(ConfigError::Invalid(format!("{k} instances per epoch but only {n} training instances")));
            }
        }
        Ok(())
    }
}
