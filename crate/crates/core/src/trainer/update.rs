use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::numkit::{gae_advantages, AdamState, MlpParams};
use crate::policy::{
    ppo_policy_grad, team_info_from_values, GroupGrads, LossStats, PolicyGroup, PolicySamples,
};

use super::{critic_grad, derive_seed, stream, CriticNet, RolloutBatch, TrainConfig, TrainError};

/// Rows per parallel gradient task. Fixed, so the summation order (and
/// therefore every float) is the same for any number of workers.
const GRAD_CHUNK: usize = 256;

/// A batch flattened for the update: per-type policy samples with
/// normalised advantages, and critic inputs with GAE returns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub policy: Vec<PolicySamples>,
    pub critic_dim: usize,
    pub critic_inputs: Vec<f64>,
    pub returns: Vec<f64>,
}

impl TrainingData {
    pub fn timesteps(&self) -> usize {
        self.returns.len()
    }
}

pub fn build_training_data(batch: &RolloutBatch, cfg: &TrainConfig) -> Result<TrainingData, TrainError> {
    let nt = cfg.arena.num_types();
    let obs_dim = cfg.arena.obs_dim();
    let n_act = cfg.arena.num_actions();
    let critic_dim = cfg.critic_input_dim();
    let mut policy: Vec<PolicySamples> = (0..nt).map(|_| PolicySamples::new(obs_dim, n_act)).collect();
    let mut critic_inputs = Vec::new();
    let mut returns = Vec::new();

    let mut advs = Vec::with_capacity(batch.episodes.len());
    let mut raw = Vec::new();
    for ep in &batch.episodes {
        let rewards: Vec<f64> = ep.steps.iter().map(|s| s.reward).collect();
        let values: Vec<f64> = ep.steps.iter().map(|s| s.value).collect();
        let last_done = ep.steps.last().is_none_or(|s| s.done);
        let bootstrap = if last_done { 0.0 } else { *values.last().unwrap_or(&0.0) };
        let (adv, ret) = gae_advantages(&rewards, &values, bootstrap, cfg.arena.gamma, cfg.gae_lambda)?;
        for (s, a) in ep.steps.iter().zip(&adv) {
            raw.extend(s.agents.iter().filter(|g| g.frontier).map(|_| *a));
        }
        for (s, r) in ep.steps.iter().zip(&ret) {
            critic_inputs.extend_from_slice(&s.critic_input);
            returns.push(*r);
        }
        advs.push(adv);
    }
    let n = raw.len().max(1) as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let std = (raw.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
    let norm = |a: f64| (a - mean) / (std + 1e-8);

    for (ep, adv) in batch.episodes.iter().zip(&advs) {
        let f_h: Vec<Vec<f64>> = (0..nt)
            .map(|t| team_info_from_values(t, ep.f_v.clone()).map(|i| i.concat()))
            .collect::<Result<_, _>>()?;
        for (s, &a) in ep.steps.iter().zip(adv) {
            for g in s.agents.iter().filter(|g| g.frontier) {
                policy[g.type_idx].push(
                    ep.obs(s, g.slot, obs_dim),
                    &f_h[g.type_idx],
                    &g.mask,
                    g.action,
                    g.log_prob,
                    norm(a),
                );
            }
        }
    }
    Ok(TrainingData {
        policy,
        critic_dim,
        critic_inputs,
        returns,
    })
}

/// Per-step training statistics (means over every processed sample).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub policy_loss: Vec<f64>,
    pub policy_samples: Vec<usize>,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub value_loss: f64,
}

/// Frontier, critic and their optimiser states: everything the update mutates.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub frontier: PolicyGroup,
    pub critic: CriticNet,
    /// One per trunk (per type unless trunks are shared).
    pub trunk_opt: Vec<AdamState>,
    /// One per type.
    pub hyper_opt: Vec<AdamState>,
    pub critic_opt: AdamState,
}

fn slice_lens(p: &MlpParams) -> Vec<usize> {
    p.slices().iter().map(|s| s.len()).collect()
}

fn minibatch(perm: &[usize], m: usize, count: usize) -> &[usize] {
    let n = perm.len();
    &perm[m * n / count..(m + 1) * n / count]
}

fn clip_scale(sq_norm: f64, max_norm: f64) -> f64 {
    let norm = sq_norm.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        max_norm / norm
    } else {
        1.0
    }
}

impl Learner {
    pub fn new(cfg: &TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[stream::INIT]));
        let frontier = PolicyGroup::new(
            cfg.policy.clone(),
            cfg.arena.num_types(),
            cfg.arena.obs_dim(),
            cfg.arena.num_actions(),
            &mut rng,
        )?;
        let critic = CriticNet::new(cfg.critic_input_dim(), &cfg.critic_hidden, &mut rng)?;
        Ok(Self::with_parts(frontier, critic, cfg))
    }

    /// Fresh optimiser state around existing networks.
    pub fn with_parts(frontier: PolicyGroup, critic: CriticNet, cfg: &TrainConfig) -> Self {
        let trunk_opt = frontier
            .trunks()
            .iter()
            .map(|t| AdamState::new(cfg.policy_adam, &slice_lens(t)))
            .collect();
        let hyper_opt = frontier
            .type_policies()
            .iter()
            .map(|t| AdamState::new(cfg.policy_adam, &slice_lens(&t.hyper)))
            .collect();
        let critic_opt = AdamState::new(cfg.critic_adam, &slice_lens(&critic.params));
        Self {
            frontier,
            critic,
            trunk_opt,
            hyper_opt,
            critic_opt,
        }
    }

    /// Runs the PPO epochs for step `step` over `data`. Only frontier
    /// parameters and the critic change.
    pub fn update(&mut self, data: &TrainingData, cfg: &TrainConfig, step: usize) -> Result<StepStats, TrainError> {
        let nt = self.frontier.num_types();
        let mut per_type = vec![LossStats::default(); nt];
        let mut value_sq = 0.0;
        let mut value_n = 0usize;
        for epoch in 0..cfg.ppo_epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.seed,
                &[stream::SHUFFLE, step as u64, epoch as u64],
            ));
            let perms: Vec<Vec<usize>> = data
                .policy
                .iter()
                .map(|s| {
                    let mut p: Vec<usize> = (0..s.len()).collect();
                    p.shuffle(&mut rng);
                    p
                })
                .collect();
            let mut critic_perm: Vec<usize> = (0..data.timesteps()).collect();
            critic_perm.shuffle(&mut rng);

            for m in 0..cfg.minibatches {
                let mut grads = self.frontier.zero_grads();
                for t in 0..nt {
                    let idx = minibatch(&perms[t], m, cfg.minibatches);
                    if idx.is_empty() {
                        continue;
                    }
                    let scale = 1.0 / idx.len() as f64;
                    let frontier = &self.frontier;
                    let samples = &data.policy[t];
                    let parts = idx
                        .par_chunks(GRAD_CHUNK)
                        .map(|c| {
                            let mut g = frontier.zero_grads();
                            let s = ppo_policy_grad(frontier, t, samples, c, &cfg.loss, scale, &mut g)?;
                            Ok((g, s))
                        })
                        .collect::<Result<Vec<(GroupGrads, LossStats)>, TrainError>>()?;
                    for (g, s) in &parts {
                        grads.trunks[frontier.trunk_index(t)]
                            .add_scaled(1.0, &g.trunks[frontier.trunk_index(t)]);
                        grads.hypers[t].add_scaled(1.0, &g.hypers[t]);
                        per_type[t].merge(s);
                    }
                    if !per_type[t].policy_loss.is_finite() {
                        return Err(TrainError::NonFinite {
                            step,
                            what: format!("policy loss of type {t} in epoch {epoch}"),
                        });
                    }
                }
                self.apply_policy(grads, cfg.max_grad_norm)?;

                let idx = minibatch(&critic_perm, m, cfg.minibatches);
                if idx.is_empty() {
                    continue;
                }
                let scale = 1.0 / idx.len() as f64;
                let critic = &self.critic;
                let parts = idx
                    .par_chunks(GRAD_CHUNK)
                    .map(|c| {
                        let mut g = critic.params.zeros_like();
                        let sq = critic_grad(critic, &data.critic_inputs, &data.returns, c, scale, &mut g)?;
                        Ok((g, sq))
                    })
                    .collect::<Result<Vec<(MlpParams, f64)>, TrainError>>()?;
                let mut cg = self.critic.params.zeros_like();
                for (g, sq) in &parts {
                    cg.add_scaled(1.0, g);
                    value_sq += sq;
                }
                value_n += idx.len();
                if !value_sq.is_finite() {
                    return Err(TrainError::NonFinite {
                        step,
                        what: format!("value loss in epoch {epoch}"),
                    });
                }
                cg.scale(clip_scale(cg.sq_norm(), cfg.max_grad_norm));
                let mut p = self.critic.params.slices_mut();
                self.critic_opt.step(&mut p, &cg.slices())?;
            }
        }
        let total: usize = per_type.iter().map(|s| s.samples).sum();
        let denom = total.max(1) as f64;
        Ok(StepStats {
            policy_loss: per_type
                .iter()
                .map(|s| s.policy_loss / s.samples.max(1) as f64)
                .collect(),
            policy_samples: data.policy.iter().map(PolicySamples::len).collect(),
            entropy: per_type.iter().map(|s| s.entropy).sum::<f64>() / denom,
            approx_kl: per_type.iter().map(|s| s.approx_kl).sum::<f64>() / denom,
            clip_fraction: per_type.iter().map(|s| s.clipped).sum::<usize>() as f64 / denom,
            value_loss: value_sq / value_n.max(1) as f64,
        })
    }

    fn apply_policy(&mut self, mut grads: GroupGrads, max_norm: f64) -> Result<(), TrainError> {
        let sq: f64 = grads.trunks.iter().map(MlpParams::sq_norm).sum::<f64>()
            + grads.hypers.iter().map(MlpParams::sq_norm).sum::<f64>();
        let s = clip_scale(sq, max_norm);
        if s != 1.0 {
            grads.trunks.iter_mut().for_each(|g| g.scale(s));
            grads.hypers.iter_mut().for_each(|g| g.scale(s));
        }
        let (trunks, types) = self.frontier.params_mut()?;
        for (i, tr) in trunks.iter_mut().enumerate() {
            self.trunk_opt[i].step(&mut tr.slices_mut(), &grads.trunks[i].slices())?;
        }
        for (j, tp) in types.iter_mut().enumerate() {
            self.hyper_opt[j].step(&mut tp.hyper.slices_mut(), &grads.hypers[j].slices())?;
        }
        Ok(())
    }
}
