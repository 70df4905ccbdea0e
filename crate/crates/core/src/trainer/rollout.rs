use rand_chacha::ChaCha8Rng;

use crate::arena::{scripted_opponent_into, Arena, ArenaConfig, Outcome, Team};
use crate::league::MixedPolicy;
use crate::policy::{
    build_frozen_team_info, team_info_from_values, MixedAssignment, PolicyError, PolicyGroup,
    PolicySource,
};

use super::{CriticNet, TrainError};

/// Which group drives each learner type for one episode, and the `F_v`
/// that frontier-driven agents see.
#[derive(Debug, Clone)]
pub struct Lineup<'a> {
    groups: Vec<&'a PolicyGroup>,
    past: Vec<bool>,
    f_v: Vec<f64>,
}

impl<'a> Lineup<'a> {
    /// `past[t]` marks types driven by a frozen group; their `F_v` entry is
    /// that group's Ω.
    pub fn new(groups: Vec<&'a PolicyGroup>, past: Vec<bool>) -> Result<Self, TrainError> {
        if groups.len() != past.len() || groups.is_empty() {
            return Err(TrainError::Config("lineup needs one group and flag per type".into()));
        }
        let mut f_v = Vec::with_capacity(groups.len());
        for (g, &p) in groups.iter().zip(&past) {
            if p {
                let w = g.omega.ok_or_else(|| {
                    PolicyError::Assignment(format!("past group {} has no omega", g.version))
                })?;
                f_v.push(w);
            } else {
                f_v.push(1.0);
            }
        }
        team_info_from_values(0, f_v.clone())?;
        Ok(Self { groups, past, f_v })
    }

    pub fn frontier(frontier: &'a PolicyGroup) -> Self {
        let n = frontier.num_types();
        Self {
            groups: vec![frontier; n],
            past: vec![false; n],
            f_v: vec![1.0; n],
        }
    }

    pub fn from_mixed(mixed: &MixedPolicy<'a>) -> Result<Self, TrainError> {
        let n = mixed.num_types();
        Self::new(
            (0..n).map(|t| mixed.group(t)).collect(),
            (0..n)
                .map(|t| matches!(mixed.source(t), PolicySource::Past(_)))
                .collect(),
        )
    }

    pub fn num_types(&self) -> usize {
        self.groups.len()
    }

    pub fn f_v(&self) -> &[f64] {
        &self.f_v
    }

    pub fn is_past(&self, type_idx: usize) -> bool {
        self.past[type_idx]
    }

    pub fn group(&self, type_idx: usize) -> &'a PolicyGroup {
        self.groups[type_idx]
    }

    /// `F_h` for frontier-driven types, `F̂_h` for past-driven ones.
    pub fn team_info(&self, type_idx: usize) -> Result<Vec<f64>, TrainError> {
        let info = if self.past[type_idx] {
            build_frozen_team_info(type_idx, self.num_types())?
        } else {
            team_info_from_values(type_idx, self.f_v.clone())?
        };
        Ok(info.concat())
    }
}

/// One learner agent's decision at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    /// Position within the learner team; the observation is block `slot` of
    /// the step's critic input.
    pub slot: usize,
    pub type_idx: usize,
    pub mask: Vec<bool>,
    pub action: usize,
    pub log_prob: f64,
    /// False for agents driven by a past group; those never enter the policy loss.
    pub frontier: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub agents: Vec<AgentStep>,
    /// Learner observations (zeros for dead agents) followed by `F_v`.
    pub critic_input: Vec<f64>,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub index: usize,
    pub assignment: MixedAssignment,
    pub f_v: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
}

impl EpisodeRecord {
    pub fn obs<'s>(&self, step: &'s StepRecord, slot: usize, obs_dim: usize) -> &'s [f64] {
        &step.critic_input[slot * obs_dim..(slot + 1) * obs_dim]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub episodes: Vec<EpisodeRecord>,
}

impl RolloutBatch {
    pub fn frontier_only_count(&self) -> usize {
        self.episodes
            .iter()
            .filter(|e| e.assignment.is_frontier_only())
            .count()
    }
}

fn run(
    cfg: &ArenaConfig,
    lineup: &Lineup,
    env_seed: u64,
    opponent_seed: u64,
    rng: &mut ChaCha8Rng,
    mut record: Option<(&CriticNet, &mut Vec<StepRecord>)>,
) -> Result<Outcome, TrainError> {
    let (mut arena, mut obs) = Arena::reset(cfg.clone(), env_seed)?;
    let nt = cfg.num_types();
    if lineup.num_types() != nt {
        return Err(TrainError::Config(format!(
            "lineup covers {} types, arena has {nt}",
            lineup.num_types()
        )));
    }
    let prepared = (0..nt)
        .map(|t| lineup.group(t).prepare(t, &lineup.team_info(t)?).map_err(TrainError::from))
        .collect::<Result<Vec<_>, _>>()?;
    let per_team = cfg.agents_per_team();
    let obs_dim = cfg.obs_dim();
    let mut actions = vec![0usize; cfg.num_agents()];
    loop {
        let mut agents = Vec::new();
        for id in 0..per_team {
            let a = &arena.state().agents[id];
            debug_assert_eq!(a.team, Team::A);
            actions[id] = 0;
            if !a.alive {
                continue;
            }
            let t = a.type_idx;
            let mask = arena.legal_actions(id)?;
            let out = prepared[t].act(&obs[id], &mask, rng)?;
            actions[id] = out.action;
            if record.is_some() {
                agents.push(AgentStep {
                    slot: id,
                    type_idx: t,
                    mask,
                    action: out.action,
                    log_prob: out.log_prob,
                    frontier: !lineup.is_past(t),
                });
            }
        }
        scripted_opponent_into(&arena, Team::B, opponent_seed, &mut actions);
        let critic_input = record.as_ref().map(|_| {
            let mut x = Vec::with_capacity(per_team * obs_dim + nt);
            for o in &obs[..per_team] {
                x.extend_from_slice(o);
            }
            x.extend_from_slice(lineup.f_v());
            x
        });
        let res = arena.step(&actions)?;
        if let Some((critic, steps)) = record.as_mut() {
            let critic_input = critic_input.expect("built when recording");
            steps.push(StepRecord {
                agents,
                value: critic.value(&critic_input),
                critic_input,
                reward: res.reward,
                done: res.done,
            });
        }
        obs = res.observations;
        if res.done {
            return Ok(res.outcome);
        }
    }
}

/// Plays one episode and records everything the update needs.
pub fn collect_episode(
    cfg: &ArenaConfig,
    lineup: &Lineup,
    assignment: MixedAssignment,
    critic: &CriticNet,
    index: usize,
    env_seed: u64,
    opponent_seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeRecord, TrainError> {
    let mut steps = Vec::with_capacity(cfg.max_steps as usize);
    let outcome = run(cfg, lineup, env_seed, opponent_seed, rng, Some((critic, &mut steps)))
        .map_err(|e| match e {
            TrainError::Arena(source) => TrainError::Episode {
                episode: index,
                source,
            },
            e => e,
        })?;
    Ok(EpisodeRecord {
        index,
        assignment,
        f_v: lineup.f_v().to_vec(),
        steps,
        outcome,
    })
}

/// Plays one episode without recording; returns the learner-side outcome.
pub fn play_episode(
    cfg: &ArenaConfig,
    lineup: &Lineup,
    env_seed: u64,
    opponent_seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Outcome, TrainError> {
    run(cfg, lineup, env_seed, opponent_seed, rng, None)
}
