use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ArenaConfig, ArenaError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Team {
    /// The learner side.
    A,
    /// The scripted side.
    B,
}

impl Team {
    pub fn other(self) -> Team {
        match self {
            Team::A => Team::B,
            Team::B => Team::A,
        }
    }

    /// Unit step along x toward the enemy spawn side.
    fn forward(self) -> i32 {
        match self {
            Team::A => 1,
            Team::B => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ongoing,
    Win,
    Loss,
    Draw,
}

impl Outcome {
    /// The same result seen from the other team.
    pub fn swap(self) -> Outcome {
        match self {
            Outcome::Win => Outcome::Loss,
            Outcome::Loss => Outcome::Win,
            o => o,
        }
    }

    pub fn is_terminal(self) -> bool {
        self != Outcome::Ongoing
    }
}

/// Decoded form of a shared action index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    NoOp,
    /// Direction index into [`DIRECTIONS`].
    Move(usize),
    Attack(usize),
    Repair,
}

/// `+y, +x, -y, -x`
pub const DIRECTIONS: [(i32, i32); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];

impl Action {
    pub fn decode(index: usize, attack_slots: usize) -> Option<Action> {
        match index {
            0 => Some(Action::NoOp),
            1..=4 => Some(Action::Move(index - 1)),
            i if i < 5 + attack_slots => Some(Action::Attack(i - 5)),
            i if i == 5 + attack_slots => Some(Action::Repair),
            _ => None,
        }
    }

    pub fn encode(self, attack_slots: usize) -> usize {
        match self {
            Action::NoOp => 0,
            Action::Move(d) => 1 + d,
            Action::Attack(s) => 5 + s,
            Action::Repair => 5 + attack_slots,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Agent {
    pub id: usize,
    pub type_idx: usize,
    pub team: Team,
    pub x: i32,
    pub y: i32,
    pub hp: u32,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArenaState {
    /// Team A occupies ids `0..n`, team B `n..2n`, both in roster order.
    pub agents: Vec<Agent>,
    pub step: u32,
    pub outcome: Outcome,
}

impl ArenaState {
    pub fn team(&self, team: Team) -> impl Iterator<Item = &Agent> {
        self.agents.iter().filter(move |a| a.team == team)
    }

    pub fn team_hp(&self, team: Team) -> u32 {
        self.team(team).filter(|a| a.alive).map(|a| a.hp).sum()
    }

    pub fn team_alive(&self, team: Team) -> usize {
        self.team(team).filter(|a| a.alive).count()
    }

    /// Short content hash for replay logs.
    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.step.to_le_bytes());
        for a in &self.agents {
            h.update((a.id as u32).to_le_bytes());
            h.update(a.x.to_le_bytes());
            h.update(a.y.to_le_bytes());
            h.update(a.hp.to_le_bytes());
            h.update([a.alive as u8]);
        }
        hex::encode(&h.finalize()[..8])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// One observation per agent id; dead agents get all zeros.
    pub observations: Vec<Vec<f64>>,
    /// Team A reward for this step.
    pub reward: f64,
    pub done: bool,
    /// Outcome from team A's perspective.
    pub outcome: Outcome,
}

#[inline]
pub fn chebyshev(a: &Agent, b: &Agent) -> u32 {
    (a.x - b.x).unsigned_abs().max((a.y - b.y).unsigned_abs())
}

/// One battle instance: configuration plus mutable state.
#[derive(Debug, Clone)]
pub struct Arena {
    config: ArenaConfig,
    state: ArenaState,
}

impl Arena {
    /// Mirrored spawn: team A agents land in the left band, team B agents at
    /// the x-mirrored cells. The seed permutes the band cells.
    pub fn reset(config: ArenaConfig, seed: u64) -> Result<(Self, Vec<Vec<f64>>), ArenaError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells: Vec<(i32, i32)> = (0..config.spawn_columns as i32)
            .flat_map(|x| (0..config.height as i32).map(move |y| (x, y)))
            .collect();
        cells.shuffle(&mut rng);
        let per_team = config.agents_per_team();
        let mut agents = Vec::with_capacity(2 * per_team);
        for team in [Team::A, Team::B] {
            let mut k = 0;
            for (type_idx, spec) in config.roster.iter().enumerate() {
                for _ in 0..spec.count {
                    let (x, y) = cells[k];
                    let x = match team {
                        Team::A => x,
                        Team::B => config.width as i32 - 1 - x,
                    };
                    agents.push(Agent {
                        id: agents.len(),
                        type_idx,
                        team,
                        x,
                        y,
                        hp: spec.max_hp,
                        alive: true,
                    });
                    k += 1;
                }
            }
        }
        let arena = Self {
            config,
            state: ArenaState {
                agents,
                step: 0,
                outcome: Outcome::Ongoing,
            },
        };
        let obs = arena.observe_all();
        Ok((arena, obs))
    }

    pub fn from_parts(config: ArenaConfig, state: ArenaState) -> Result<Self, ArenaError> {
        config.validate()?;
        if state.agents.len() != config.num_agents() {
            return Err(ArenaError::Config(format!(
                "state has {} agents, config expects {}",
                state.agents.len(),
                config.num_agents()
            )));
        }
        Ok(Self { config, state })
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.config
    }

    pub fn state(&self) -> &ArenaState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ArenaState {
        &mut self.state
    }

    fn agent(&self, id: usize) -> Result<&Agent, ArenaError> {
        self.state.agents.get(id).ok_or(ArenaError::UnknownAgent(id))
    }

    /// Enemies `id` can hit (alive, air-targeting allowed), nearest first,
    /// ties broken by id. Range is not applied.
    pub fn attack_candidates(&self, id: usize) -> Vec<usize> {
        let me = &self.state.agents[id];
        let spec = &self.config.roster[me.type_idx];
        if spec.damage == 0 {
            return Vec::new();
        }
        let mut c: Vec<(u32, usize)> = self
            .state
            .agents
            .iter()
            .filter(|e| e.alive && e.team != me.team)
            .filter(|e| spec.can_target_air || !self.config.roster[e.type_idx].is_air)
            .map(|e| (chebyshev(me, e), e.id))
            .collect();
        c.sort_unstable();
        c.into_iter().map(|(_, i)| i).collect()
    }

    /// Target of attack slot `slot`, if that slot is legal.
    pub fn attack_target(&self, id: usize, slot: usize) -> Option<usize> {
        let me = &self.state.agents[id];
        let range = self.config.roster[me.type_idx].attack_range;
        self.attack_candidates(id)
            .get(slot)
            .copied()
            .filter(|&t| chebyshev(me, &self.state.agents[t]) <= range)
    }

    /// The most damaged living ally within repair range (largest missing HP,
    /// then lowest id), if `id` is a support unit.
    pub fn repair_target(&self, id: usize) -> Option<usize> {
        let me = &self.state.agents[id];
        if !self.config.roster[me.type_idx].is_support() || !me.alive {
            return None;
        }
        self.state
            .agents
            .iter()
            .filter(|a| a.alive && a.team == me.team && a.id != id)
            .filter(|a| chebyshev(me, a) <= self.config.repair_range)
            .map(|a| (self.config.roster[a.type_idx].max_hp - a.hp, a.id))
            .filter(|&(missing, _)| missing > 0)
            .max_by(|x, y| x.0.cmp(&y.0).then(y.1.cmp(&x.1)))
            .map(|(_, i)| i)
    }

    fn move_legal(&self, a: &Agent, dir: usize) -> bool {
        let (dx, dy) = DIRECTIONS[dir];
        let (nx, ny) = (a.x + dx, a.y + dy);
        nx >= 0 && ny >= 0 && nx < self.config.width as i32 && ny < self.config.height as i32
    }

    pub fn legal_actions(&self, id: usize) -> Result<Vec<bool>, ArenaError> {
        let a = self.agent(id)?;
        if !a.alive {
            return Err(ArenaError::DeadAgent(id));
        }
        let k = self.config.attack_slots;
        let mut mask = vec![false; self.config.num_actions()];
        mask[0] = true;
        for d in 0..4 {
            mask[1 + d] = self.move_legal(a, d);
        }
        let range = self.config.roster[a.type_idx].attack_range;
        for (slot, &t) in self.attack_candidates(id).iter().take(k).enumerate() {
            mask[5 + slot] = chebyshev(a, &self.state.agents[t]) <= range;
        }
        mask[5 + k] = self.repair_target(id).is_some();
        Ok(mask)
    }

    fn reason(&self, id: usize, action: usize) -> String {
        match Action::decode(action, self.config.attack_slots) {
            None => format!("action index {action} outside the action space"),
            Some(Action::Move(_)) => "move leaves the grid".into(),
            Some(Action::Attack(s)) => {
                let me = &self.state.agents[id];
                let spec = &self.config.roster[me.type_idx];
                let air_only = self
                    .state
                    .agents
                    .iter()
                    .filter(|e| e.alive && e.team != me.team && chebyshev(me, e) <= spec.attack_range)
                    .all(|e| self.config.roster[e.type_idx].is_air);
                if !spec.can_target_air && air_only {
                    format!("attack slot {s}: type {} cannot target air units", spec.name)
                } else {
                    format!("attack slot {s}: no attackable enemy in range")
                }
            }
            Some(Action::Repair) => "repair: not a support unit or no damaged ally in range".into(),
            Some(Action::NoOp) => unreachable!("no-op is always legal"),
        }
    }

    /// Advances one step. `actions[id]` is read for every living agent;
    /// entries for dead agents are ignored.
    pub fn step(&mut self, actions: &[usize]) -> Result<StepResult, ArenaError> {
        if self.state.outcome.is_terminal() {
            return Err(ArenaError::EpisodeOver);
        }
        if actions.len() != self.state.agents.len() {
            return Err(ArenaError::Config(format!(
                "{} actions for {} agents",
                actions.len(),
                self.state.agents.len()
            )));
        }
        let k = self.config.attack_slots;
        let n = self.state.agents.len();
        let mut attack_of = vec![None; n];
        let mut repairs = vec![false; n];
        let mut moves = vec![None; n];
        for id in 0..n {
            if !self.state.agents[id].alive {
                continue;
            }
            let act = actions[id];
            let mask = self.legal_actions(id)?;
            if act >= mask.len() || !mask[act] {
                return Err(ArenaError::IllegalAction {
                    agent: id,
                    action: act,
                    reason: self.reason(id, act),
                });
            }
            match Action::decode(act, k).expect("checked against mask") {
                Action::NoOp => {}
                Action::Move(d) => moves[id] = Some(d),
                Action::Attack(s) => attack_of[id] = self.attack_target(id, s),
                Action::Repair => repairs[id] = true,
            }
        }

        // moves
        let (w, h) = (self.config.width as i32, self.config.height as i32);
        for (id, d) in moves.iter().enumerate() {
            if let Some(d) = *d {
                let speed = self.config.roster[self.state.agents[id].type_idx].speed as i32;
                let (dx, dy) = DIRECTIONS[d];
                let a = &mut self.state.agents[id];
                a.x = (a.x + dx * speed).clamp(0, w - 1);
                a.y = (a.y + dy * speed).clamp(0, h - 1);
            }
        }

        // attacks land if the target is still in range after moving
        let mut damage = vec![0u32; n];
        for (id, target) in attack_of.iter().enumerate() {
            if let Some(t) = *target {
                let me = &self.state.agents[id];
                let spec = &self.config.roster[me.type_idx];
                if chebyshev(me, &self.state.agents[t]) <= spec.attack_range {
                    damage[t] += spec.damage;
                }
            }
        }
        let mut lost = [0u32; 2];
        for (a, &d) in self.state.agents.iter_mut().zip(&damage) {
            let taken = d.min(a.hp);
            a.hp -= taken;
            lost[a.team as usize] += taken;
            if a.hp == 0 {
                a.alive = false;
            }
        }

        // repairs by supports that survived the attack phase
        let mut heal = vec![0u32; n];
        for id in 0..n {
            if repairs[id] && self.state.agents[id].alive {
                if let Some(t) = self.repair_target(id) {
                    heal[t] += self.config.roster[self.state.agents[id].type_idx].repair;
                }
            }
        }
        let mut repaired = [0u32; 2];
        for (a, &r) in self.state.agents.iter_mut().zip(&heal) {
            if r > 0 && a.alive {
                let max = self.config.roster[a.type_idx].max_hp;
                let gain = r.min(max - a.hp);
                a.hp += gain;
                repaired[a.team as usize] += gain;
            }
        }

        self.state.step += 1;
        self.state.outcome = self.judge(Team::A);
        let wts = self.config.reward;
        let scale = self.config.team_max_hp() as f64;
        let mut reward = (wts.damage_dealt * lost[Team::B as usize] as f64
            - wts.damage_taken * lost[Team::A as usize] as f64
            + wts.repair * repaired[Team::A as usize] as f64)
            / scale;
        if self.state.outcome == Outcome::Win {
            reward += wts.win;
        }
        Ok(StepResult {
            observations: self.observe_all(),
            reward,
            done: self.state.outcome.is_terminal(),
            outcome: self.state.outcome,
        })
    }

    /// Outcome from `team`'s perspective for the current state.
    pub fn judge(&self, team: Team) -> Outcome {
        let mine = self.state.team_alive(team);
        let theirs = self.state.team_alive(team.other());
        match (mine, theirs) {
            (0, 0) => Outcome::Draw,
            (_, 0) => Outcome::Win,
            (0, _) => Outcome::Loss,
            _ if self.state.step >= self.config.max_steps => {
                let (hm, ht) = (self.state.team_hp(team), self.state.team_hp(team.other()));
                match hm.cmp(&ht) {
                    std::cmp::Ordering::Greater => Outcome::Win,
                    std::cmp::Ordering::Less => Outcome::Loss,
                    std::cmp::Ordering::Equal => Outcome::Draw,
                }
            }
            _ => Outcome::Ongoing,
        }
    }

    /// Partial observation of agent `id`.
    ///
    /// Own block: type one-hot, position (x mirrored for team B), HP
    /// fraction. Then one slot per other agent: allies first, then enemies,
    /// each group holding the visible agents nearest first and zero-padded.
    /// A slot is `[dx, dy, type one-hot, enemy flag, HP fraction]`.
    pub fn observe(&self, id: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.config.obs_dim()];
        self.observe_into(id, &mut out);
        out
    }

    pub fn observe_into(&self, id: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let me = &self.state.agents[id];
        if !me.alive {
            return;
        }
        let nt = self.config.num_types();
        let flip = if me.team == Team::A { 1.0 } else { -1.0 };
        let w1 = (self.config.width - 1).max(1) as f64;
        let h1 = (self.config.height - 1).max(1) as f64;
        out[me.type_idx] = 1.0;
        out[nt] = if me.team == Team::A {
            me.x as f64 / w1
        } else {
            (w1 - me.x as f64) / w1
        };
        out[nt + 1] = me.y as f64 / h1;
        out[nt + 2] = me.hp as f64 / self.config.roster[me.type_idx].max_hp as f64;

        let vision = self.config.vision_radius;
        let slot_w = nt + 4;
        let per_team = self.config.agents_per_team();
        let mut visible: Vec<(bool, u32, usize)> = self
            .state
            .agents
            .iter()
            .filter(|o| o.alive && o.id != id)
            .map(|o| (o.team != me.team, chebyshev(me, o), o.id))
            .filter(|&(_, d, _)| d <= vision)
            .collect();
        visible.sort_unstable();
        let base = nt + 3;
        let (mut ally_slot, mut enemy_slot) = (0usize, per_team - 1);
        for (enemy, _, oid) in visible {
            let o = &self.state.agents[oid];
            let slot = if enemy {
                enemy_slot += 1;
                enemy_slot - 1
            } else {
                ally_slot += 1;
                ally_slot - 1
            };
            let s = &mut out[base + slot * slot_w..base + (slot + 1) * slot_w];
            s[0] = flip * (o.x - me.x) as f64 / vision as f64;
            s[1] = (o.y - me.y) as f64 / vision as f64;
            s[2 + o.type_idx] = 1.0;
            s[2 + nt] = if enemy { 1.0 } else { 0.0 };
            s[3 + nt] = o.hp as f64 / self.config.roster[o.type_idx].max_hp as f64;
        }
    }

    pub fn observe_all(&self) -> Vec<Vec<f64>> {
        (0..self.state.agents.len()).map(|i| self.observe(i)).collect()
    }

    /// Scripted-side default move when no enemy is visible.
    pub(crate) fn forward_dir(team: Team) -> usize {
        if team.forward() > 0 {
            1
        } else {
            3
        }
    }
}

/// Maps a total episode reward onto `[0, 1]` using the configuration's
/// analytic bounds.
pub fn normalized_reward(total: f64, config: &ArenaConfig) -> Result<f64, ArenaError> {
    let (min, max) = config.reward_bounds();
    normalize_between(total, min, max)
}

pub fn normalize_between(total: f64, min: f64, max: f64) -> Result<f64, ArenaError> {
    if !(max - min).is_normal() || max <= min {
        return Err(ArenaError::DegenerateRange { min, max });
    }
    Ok(((total - min) / (max - min)).clamp(0.0, 1.0))
}
