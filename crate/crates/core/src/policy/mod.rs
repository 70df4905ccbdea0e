//! Per-type policies whose output layers are generated by a hyper-network
//! from the agent-team information vector, plus duplicate-and-freeze.

mod checkpoint;
mod group;
mod loss;
mod team_info;

pub(crate) use checkpoint::{read_net, write_net};
pub use checkpoint::{load_group, read_group_manifest, save_group, GroupManifest, LayerEntry, GROUP_FORMAT};
pub use group::{
    duplicate_and_freeze, hypernet_generate, split_generated, ActOutput, GeneratedLayer, GroupGrads,
    PolicyConfig, PolicyGroup, PreparedPolicy, TypePolicy,
};
pub use loss::{ppo_policy_grad, ppo_policy_objective, LossStats, PolicySamples, PpoLossConfig};
pub use team_info::{
    build_frozen_team_info, build_team_info, team_info_from_values, team_values, MixedAssignment,
    PolicySource, TeamInfo,
};

use crate::numkit::NumError;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("unknown agent type {0}")]
    UnknownType(usize),
    #[error("omega {0} outside [0, 1]")]
    OmegaRange(f64),
    #[error("invalid assignment: {0}")]
    Assignment(String),
    #[error("policy group version {0} is frozen")]
    Frozen(u64),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint format {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
