//! Run configuration shared by every subcommand. Loaded from JSON with
//! `--config`; any field left out keeps its default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use reactnav::curriculum::TrainingPlan;
use reactnav::{LearnerConfig, NavConfig, RobotSpec, Thresholds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// World file used when a subcommand gets no `--world`/`--scenario`.
    pub world: Option<PathBuf>,
    pub thresholds: Thresholds,
    pub robot: RobotSpec,
    pub noise_sigma: f64,
    pub planner_delay_ticks: u64,
    pub learner: LearnerConfig,
    /// Recipe for `train-planner`. Its `learner` is replaced by the one above.
    pub training: TrainingPlan,
    pub seed: u64,
    pub split_seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let nav = NavConfig::default();
        RunConfig {
            world: None,
            thresholds: nav.thresholds,
            robot: RobotSpec::default(),
            noise_sigma: nav.noise_sigma,
            planner_delay_ticks: nav.planner_delay_ticks,
            learner: LearnerConfig::default(),
            training: TrainingPlan::default(),
            seed: 0,
            split_seed: reactnav::dataset::DEFAULT_SPLIT_SEED,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.world {
            if !w.is_file() {
                bail!("world file {} does not exist", w.display());
            }
        }
        self.robot.validate()?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            bail!("noise_sigma must be finite and non-negative");
        }
        if self.learner.k == 0 || self.learner.forest.n_trees == 0 {
            bail!("learner k and n_trees must be at least 1");
        }
        if !(1..=4).contains(&self.learner.forest.features_per_split) {
            bail!("features_per_split must be 1-4");
        }
        self.nav(1).validate().map_err(anyhow::Error::msg)?;
        Ok(())
    }

    pub fn nav(&self, max_ticks: u64) -> NavConfig {
        NavConfig {
            thresholds: self.thresholds,
            planner_delay_ticks: self.planner_delay_ticks,
            max_ticks,
            noise_sigma: self.noise_sigma,
            ..NavConfig::default()
        }
    }

    pub fn dir(&self, sub: &str) -> PathBuf {
        self.out_dir.join(sub)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 9, "noise_sigma": 0.0}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.thresholds, Thresholds::default());
    }

    #[test]
    fn rejects_bad_values() {
        let bad = RunConfig {
            noise_sigma: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let th = RunConfig {
            thresholds: Thresholds {
                threshold: 4.0,
                critical: 5.0,
            },
            ..Default::default()
        };
        assert!(th.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 1}"#).is_err());
    }
}
