use serde::{Deserialize, Serialize};

use crate::arena::ArenaConfig;
use crate::league::SamplerConfig;
use crate::numkit::AdamConfig;
use crate::policy::{PolicyConfig, PpoLossConfig};

use super::TrainError;

/// Full run configuration. Unknown keys are rejected and missing keys take
/// the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub arena: ArenaConfig,
    pub policy: PolicyConfig,
    /// Episodes collected per optimisation step (`M_em`).
    pub episodes_per_step: usize,
    /// Evaluation interval in training episodes (`M_st`). An evaluation runs
    /// after every step whose cumulative episode count crosses a multiple.
    pub eval_interval_episodes: usize,
    pub eval_episodes: usize,
    pub sampler: SamplerConfig,
    pub league_capacity: usize,
    pub total_steps: usize,
    pub gae_lambda: f64,
    pub loss: PpoLossConfig,
    pub policy_adam: AdamConfig,
    pub critic_adam: AdamConfig,
    pub critic_hidden: Vec<usize>,
    pub ppo_epochs: usize,
    pub minibatches: usize,
    /// Global gradient-norm clip per update; 0 disables it.
    pub max_grad_norm: f64,
    /// Write real elapsed milliseconds into the metrics log. Off by default
    /// so logs from identical runs compare byte for byte.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            arena: ArenaConfig::default(),
            policy: PolicyConfig::default(),
            episodes_per_step: 128,
            eval_interval_episodes: 1600,
            eval_episodes: 160,
            sampler: SamplerConfig::default(),
            league_capacity: 5,
            total_steps: 200,
            gae_lambda: 0.95,
            loss: PpoLossConfig::default(),
            policy_adam: AdamConfig::default(),
            critic_adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            critic_hidden: vec![64, 64],
            ppo_epochs: 3,
            minibatches: 4,
            max_grad_norm: 0.5,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        self.arena
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        self.sampler
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        if self.episodes_per_step == 0 {
            return bad("episodes_per_step must be positive");
        }
        if self.eval_interval_episodes == 0 {
            return bad("eval_interval_episodes must be positive");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive");
        }
        if self.league_capacity == 0 {
            return bad("league_capacity must be positive");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda outside [0, 1]");
        }
        if !(self.loss.clip_eps > 0.0 && self.loss.clip_eps < 1.0) || self.loss.dual_c <= 1.0 {
            return bad("clip_eps must be in (0, 1) and dual_c > 1");
        }
        if self.ppo_epochs == 0 || self.minibatches == 0 {
            return bad("ppo_epochs and minibatches must be positive");
        }
        if self.critic_hidden.is_empty() || self.critic_hidden.contains(&0) {
            return bad("critic_hidden needs at least one non-empty layer");
        }
        for a in [&self.policy_adam, &self.critic_adam] {
            if !(a.lr > 0.0 && a.lr.is_finite()) {
                return bad("learning rates must be positive");
            }
        }
        if !(self.max_grad_norm >= 0.0 && self.max_grad_norm.is_finite()) {
            return bad("max_grad_norm must be finite and non-negative");
        }
        Ok(())
    }

    /// True when an evaluation follows optimisation step `step` (1-based).
    pub fn is_boundary(&self, step: usize) -> bool {
        let m = self.episodes_per_step;
        let k = self.eval_interval_episodes;
        step > 0 && (step * m) / k > ((step - 1) * m) / k
    }

    /// Critic input width: every learner observation plus `F_v`.
    pub fn critic_input_dim(&self) -> usize {
        self.arena.agents_per_team() * self.arena.obs_dim() + self.arena.num_types()
    }
}
