use serde::{Deserialize, Serialize};

use super::ArenaError;

/// Abilities shared by every agent of one type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentTypeSpec {
    pub name: String,
    /// Agents of this type per team.
    pub count: usize,
    pub max_hp: u32,
    /// Cells moved per move action.
    pub speed: u32,
    /// Chebyshev attack range in cells.
    pub attack_range: u32,
    pub damage: u32,
    /// HP restored per repair action; zero for non-support types.
    pub repair: u32,
    pub can_target_air: bool,
    pub is_air: bool,
}

impl AgentTypeSpec {
    pub fn is_support(&self) -> bool {
        self.repair > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub damage_dealt: f64,
    pub damage_taken: f64,
    pub repair: f64,
    pub win: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            damage_dealt: 1.0,
            damage_taken: 0.5,
            repair: 0.3,
            win: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArenaConfig {
    pub width: u32,
    pub height: u32,
    pub roster: Vec<AgentTypeSpec>,
    pub max_steps: u32,
    pub gamma: f64,
    pub reward: RewardWeights,
    /// Chebyshev radius inside which other agents are observed.
    pub vision_radius: u32,
    /// Number of attack actions; slot `i` targets the `i`-th nearest attackable enemy.
    pub attack_slots: usize,
    /// Chebyshev range of the repair action.
    pub repair_range: u32,
    /// Width of each team's spawn band, in columns.
    pub spawn_columns: u32,
}

impl Default for ArenaConfig {
    /// The `2u-4m-4k` roster: 2 support air units, 4 long-range missile
    /// units, 4 short-range kinetic units per team.
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            roster: vec![
                AgentTypeSpec {
                    name: "uav".into(),
                    count: 2,
                    max_hp: 8,
                    speed: 2,
                    attack_range: 3,
                    damage: 3,
                    repair: 2,
                    can_target_air: true,
                    is_air: true,
                },
                AgentTypeSpec {
                    name: "missile".into(),
                    count: 4,
                    max_hp: 8,
                    speed: 1,
                    attack_range: 4,
                    damage: 1,
                    repair: 0,
                    can_target_air: true,
                    is_air: false,
                },
                AgentTypeSpec {
                    name: "kinetic".into(),
                    count: 4,
                    max_hp: 10,
                    speed: 1,
                    attack_range: 1,
                    damage: 3,
                    repair: 0,
                    can_target_air: false,
                    is_air: false,
                },
            ],
            max_steps: 40,
            gamma: 0.99,
            reward: RewardWeights::default(),
            vision_radius: 6,
            attack_slots: 3,
            repair_range: 1,
            spawn_columns: 2,
        }
    }
}

impl ArenaConfig {
    pub fn num_types(&self) -> usize {
        self.roster.len()
    }

    pub fn agents_per_team(&self) -> usize {
        self.roster.iter().map(|t| t.count).sum()
    }

    pub fn num_agents(&self) -> usize {
        2 * self.agents_per_team()
    }

    /// Shared discrete action count: no-op, 4 moves, attack slots, repair.
    pub fn num_actions(&self) -> usize {
        6 + self.attack_slots
    }

    /// Length of every agent's observation vector.
    pub fn obs_dim(&self) -> usize {
        let nt = self.num_types();
        nt + 3 + (self.num_agents() - 1) * (nt + 4)
    }

    pub fn team_max_hp(&self) -> u32 {
        self.roster.iter().map(|t| t.count as u32 * t.max_hp).sum()
    }

    pub fn validate(&self) -> Result<(), ArenaError> {
        let bad = |m: String| Err(ArenaError::Config(m));
        if self.roster.is_empty() {
            return bad("roster is empty".into());
        }
        if let Some(t) = self.roster.iter().find(|t| t.count == 0 || t.max_hp == 0) {
            return bad(format!("type {} needs count >= 1 and max_hp >= 1", t.name));
        }
        if self.width < 2 * self.spawn_columns + 1 || self.height == 0 || self.spawn_columns == 0 {
            return bad(format!(
                "grid {}x{} cannot hold two {}-column spawn bands",
                self.width, self.height, self.spawn_columns
            ));
        }
        let band = (self.spawn_columns * self.height) as usize;
        if self.agents_per_team() > band {
            return bad(format!(
                "{} agents per team do not fit a spawn band of {band} cells",
                self.agents_per_team()
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if self.vision_radius == 0 {
            return bad("vision_radius must be positive".into());
        }
        let w = self.reward;
        if [w.damage_dealt, w.damage_taken, w.repair, w.win]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return bad("reward weights must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Analytic bounds on the learner team's total episode reward.
    pub fn reward_bounds(&self) -> (f64, f64) {
        let hp = self.team_max_hp() as f64;
        let w = self.reward;
        let repair_cap: f64 = self
            .roster
            .iter()
            .map(|t| (t.count as u32 * t.repair) as f64)
            .sum::<f64>()
            * self.max_steps as f64;
        let min = -w.damage_taken;
        let max = w.damage_dealt + w.repair * repair_cap / hp + w.win;
        (min, max)
    }
}
