use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cae::OrientationReg;
use crate::error::{Error, Result};

/// Optimization settings for pretraining and joint training.
///
/// Every non-optional field must be present when read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lipschitz_weight: f64,
    /// Adam steps of seed pretraining; 0 skips pretraining.
    pub pretrain_steps: usize,
    /// Use `+log p_α` in the pretraining loss instead of `-log p_α`.
    pub literal_pretrain_sign: bool,
    pub orientation_reg: OrientationReg,
    pub orientation_weight: f64,
    /// Neighborhood size around each seed for the orientation term.
    pub orientation_neighbors: usize,
    pub prune: bool,
    pub prune_rel_threshold: f64,
    /// First epoch (1-based) at which pruning may run.
    pub prune_start: usize,
    pub prune_every: usize,
    pub seed: u64,
    /// Save a checkpoint every this many epochs; 0 disables checkpoints.
    pub checkpoint_every: usize,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-4,
            batch_size: 64,
            epochs: 100,
            lipschitz_weight: 1e-2,
            pretrain_steps: 2000,
            literal_pretrain_sign: false,
            orientation_reg: OrientationReg::Off,
            orientation_weight: 1e-2,
            orientation_neighbors: 10,
            prune: true,
            prune_rel_threshold: 1e-2,
            prune_start: 20,
            prune_every: 10,
            seed: 0,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("prune_rel_threshold", self.prune_rel_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{name}` must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("lipschitz_weight", self.lipschitz_weight),
            ("orientation_weight", self.orientation_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "`{name}` must be nonnegative, got {v}"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("`batch_size` must be positive".into()));
        }
        if self.prune_every == 0 {
            return Err(Error::Config("`prune_every` must be positive".into()));
        }
        if self.checkpoint_every > 0 && self.checkpoint_dir.is_none() {
            return Err(Error::Config(
                "`checkpoint_every` needs `checkpoint_dir`".into(),
            ));
        }
        Ok(())
    }

    /// Whether pruning runs after the given 1-based epoch.
    pub fn prunes_after(&self, epoch: usize) -> bool {
        self.prune && epoch >= self.prune_start && epoch % self.prune_every == 0
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plain config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let c = TrainConfig::default();
        assert_eq!(TrainConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn missing_key_is_named() {
        let text = TrainConfig::default()
            .to_toml_string()
            .replace("lipschitz_weight", "# gone");
        let err = TrainConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("lipschitz_weight"), "{err}");
    }

    #[test]
    fn prune_schedule() {
        let c = TrainConfig::default();
        let at: Vec<usize> = (1..=60).filter(|&e| c.prunes_after(e)).collect();
        assert_eq!(at, vec![20, 30, 40, 50, 60]);
    }
}
