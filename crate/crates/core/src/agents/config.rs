use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::replay::RelabelMode;

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    /// Weight of the supervised term in the joint actor loss.
    pub alpha: f64,
    /// Model rollout depth for model-based relabeling.
    pub n_mbr_steps: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub polyak: f64,
    /// Probability of a uniformly random exploratory action.
    pub eps_random: f64,
    /// Exploration noise std as a fraction of the action half-range.
    pub noise_std: f64,
    pub p_relabel: f64,
    pub relabel_mode: RelabelMode,
    pub use_sl: bool,
    pub target_clip: bool,
    pub normalize_obs: bool,
    /// Hidden layer widths of the actor and critic.
    pub hidden: Vec<usize>,
    /// Goal perturbation std for `goal-noise` relabeling.
    pub goal_noise_std: f64,
    /// Expansion horizon of value-expansion targets.
    pub mve_horizon: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            alpha: 3.0,
            n_mbr_steps: 5,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            polyak: 0.9,
            eps_random: 0.3,
            noise_std: 0.2,
            p_relabel: 0.8,
            relabel_mode: RelabelMode::Mbr,
            use_sl: true,
            target_clip: true,
            normalize_obs: true,
            hidden: vec![256, 256, 256],
            goal_noise_std: 0.01,
            mve_horizon: 3,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.gamma > 0.0 && self.gamma < 1.0,
            InvalidArgument,
            "gamma {} outside (0, 1)",
            self.gamma
        );
        ensure!(self.alpha >= 0.0, InvalidArgument, "alpha must be non-negative");
        for (name, p) in [
            ("polyak", self.polyak),
            ("eps_random", self.eps_random),
            ("p_relabel", self.p_relabel),
        ] {
            ensure!((0.0..=1.0).contains(&p), InvalidArgument, "{name} {p} outside [0, 1]");
        }
        ensure!(
            self.lr_actor > 0.0 && self.lr_critic > 0.0,
            InvalidArgument,
            "learning rates must be positive"
        );
        ensure!(
            self.noise_std >= 0.0 && self.goal_noise_std >= 0.0,
            InvalidArgument,
            "noise scales must be non-negative"
        );
        ensure!(
            !self.hidden.is_empty() && self.hidden.iter().all(|&h| h > 0),
            InvalidArgument,
            "hidden widths must be positive"
        );
        ensure!(self.mve_horizon >= 1, InvalidArgument, "mve_horizon must be at least 1");
        Ok(())
    }

    /// Supervised weight actually applied.
    pub fn effective_alpha(&self) -> f64 {
        if self.use_sl {
            self.alpha
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        AgentConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            AgentConfig { gamma: 1.0, ..Default::default() },
            AgentConfig { alpha: -1.0, ..Default::default() },
            AgentConfig { p_relabel: 1.2, ..Default::default() },
            AgentConfig { hidden: vec![], ..Default::default() },
            AgentConfig { mve_horizon: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn json_uses_kebab_modes_and_defaults() {
        let cfg: AgentConfig =
            serde_json::from_str(r#"{"relabel_mode": "her-future", "alpha": 0.0}"#).unwrap();
        assert_eq!(cfg.relabel_mode, RelabelMode::HerFuture);
        assert_eq!(cfg.alpha, 0.0);
        assert_eq!(cfg.gamma, 0.98);
    }
}
