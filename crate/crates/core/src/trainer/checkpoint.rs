//! Run checkpoints. Layout of one checkpoint directory:
//!
//! ```text
//! state.json         step, episode count, Ω history, config, optimiser steps
//! league.json        league manifest (members, ω, paths, admission history)
//! frontier/          policy group (manifest.json + tensor files)
//! critic/            critic tensors
//! optim/             Adam first/second moments, one file per tensor
//! league/v<version>/ one policy group per league member
//! ```
//!
//! Every tensor is stored as f64 so a resumed run continues bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::league::{League, LeagueManifest};
use crate::numkit::{AdamState, DType, Tensor};
use crate::policy::{load_group, read_net, save_group, write_net, LayerEntry};

use super::{CriticNet, Learner, TrainConfig, TrainError};

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub learner: Learner,
    pub league: League,
    pub step: usize,
    pub episodes: u64,
    pub omega_history: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimEntry {
    name: String,
    t: u64,
    tensors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct State {
    format: u32,
    step: usize,
    episodes: u64,
    omega_history: Vec<(usize, f64)>,
    config: TrainConfig,
    critic: Vec<LayerEntry>,
    optimizers: Vec<OptimEntry>,
}

fn member_dir(version: u64) -> String {
    format!("league/v{version:06}")
}

fn write_adam(dir: &Path, name: &str, opt: &AdamState) -> Result<OptimEntry, TrainError> {
    for (k, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
        for (tag, data) in [("m", m), ("v", v)] {
            let t = Tensor::vector(data.clone())?;
            fs::write(dir.join(format!("{name}_{k}_{tag}.hltt")), t.to_bytes(DType::F64))?;
        }
    }
    Ok(OptimEntry {
        name: name.to_string(),
        t: opt.t,
        tensors: opt.m.len(),
    })
}

fn read_adam(dir: &Path, e: &OptimEntry, into: &mut AdamState) -> Result<(), TrainError> {
    if e.tensors != into.m.len() {
        return Err(TrainError::Corrupt(format!(
            "optimiser {} has {} tensors, network has {}",
            e.name,
            e.tensors,
            into.m.len()
        )));
    }
    into.t = e.t;
    for k in 0..e.tensors {
        for tag in ["m", "v"] {
            let file = format!("{}_{k}_{tag}.hltt", e.name);
            let (t, _) = Tensor::from_bytes(&fs::read(dir.join(&file))?)
                .map_err(|err| TrainError::Corrupt(format!("{file}: {err}")))?;
            let dst = if tag == "m" { &mut into.m[k] } else { &mut into.v[k] };
            if t.data().len() != dst.len() {
                return Err(TrainError::Corrupt(format!("{file}: wrong length")));
            }
            dst.copy_from_slice(t.data());
        }
    }
    Ok(())
}

pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<(), TrainError> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    let names: Vec<String> = ckpt.config.arena.roster.iter().map(|t| t.name.clone()).collect();
    fs::create_dir_all(dir.join("critic"))?;
    fs::create_dir_all(dir.join("optim"))?;
    save_group(&ckpt.learner.frontier, &names, &dir.join("frontier"), DType::F64)?;
    let critic = write_net(&dir.join("critic"), "critic", &ckpt.learner.critic.params, DType::F64)?;

    let optim = dir.join("optim");
    let mut optimizers = Vec::new();
    for (i, o) in ckpt.learner.trunk_opt.iter().enumerate() {
        optimizers.push(write_adam(&optim, &format!("trunk{i}"), o)?);
    }
    for (j, o) in ckpt.learner.hyper_opt.iter().enumerate() {
        optimizers.push(write_adam(&optim, &format!("hyper{j}"), o)?);
    }
    optimizers.push(write_adam(&optim, "critic", &ckpt.learner.critic_opt)?);

    for m in ckpt.league.members() {
        save_group(&m.group, &names, &dir.join(member_dir(m.version())), DType::F64)?;
    }
    let manifest = ckpt.league.manifest(|m| member_dir(m.version()));
    fs::write(dir.join("league.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;

    let state = State {
        format: CHECKPOINT_FORMAT,
        step: ckpt.step,
        episodes: ckpt.episodes,
        omega_history: ckpt.omega_history.clone(),
        config: ckpt.config.clone(),
        critic,
        optimizers,
    };
    fs::write(dir.join("state.json"), serde_json::to_string_pretty(&state)? + "\n")?;
    Ok(())
}

fn corrupt<E: std::fmt::Display>(what: &str) -> impl Fn(E) -> TrainError + '_ {
    move |e| TrainError::Corrupt(format!("{what}: {e}"))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, TrainError> {
    let text = fs::read_to_string(dir.join("state.json"))?;
    let probe: serde_json::Value = serde_json::from_str(&text).map_err(corrupt("state.json"))?;
    let found = probe.get("format").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != CHECKPOINT_FORMAT {
        return Err(TrainError::Version {
            found,
            expected: CHECKPOINT_FORMAT,
        });
    }
    let state: State = serde_json::from_value(probe).map_err(corrupt("state.json"))?;
    state.config.validate()?;

    let (frontier, _) = load_group(&dir.join("frontier"))?;
    let critic = CriticNet {
        params: read_net(&dir.join("critic"), &state.critic)?,
    };
    if critic.input_dim() != state.config.critic_input_dim() {
        return Err(TrainError::Corrupt("critic input width disagrees with config".into()));
    }
    let mut learner = Learner::with_parts(frontier, critic, &state.config);
    let optim = dir.join("optim");
    let n_trunk = learner.trunk_opt.len();
    let n_hyper = learner.hyper_opt.len();
    if state.optimizers.len() != n_trunk + n_hyper + 1 {
        return Err(TrainError::Corrupt("optimiser count disagrees with the networks".into()));
    }
    for (k, e) in state.optimizers.iter().enumerate() {
        let target = if k < n_trunk {
            &mut learner.trunk_opt[k]
        } else if k < n_trunk + n_hyper {
            &mut learner.hyper_opt[k - n_trunk]
        } else {
            &mut learner.critic_opt
        };
        read_adam(&optim, e, target)?;
    }

    let text = fs::read_to_string(dir.join("league.json"))?;
    let manifest: LeagueManifest = serde_json::from_str(&text).map_err(corrupt("league.json"))?;
    let groups = manifest
        .members
        .iter()
        .map(|e| load_group(&dir.join(&e.path)).map(|(g, _)| g))
        .collect::<Result<Vec<_>, _>>()?;
    let league = League::from_manifest(manifest, groups).map_err(corrupt("league.json"))?;

    Ok(Checkpoint {
        config: state.config,
        learner,
        league,
        step: state.step,
        episodes: state.episodes,
        omega_history: state.omega_history,
    })
}
