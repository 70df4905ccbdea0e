//! The training loop: mixed-policy rollouts against the scripted opponent,
//! dual-clip PPO on the frontier, one centralised critic, periodic
//! evaluation, league admission and checkpoints.

mod checkpoint;
mod config;
mod critic;
mod eval;
mod rollout;
mod run;
mod update;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use config::TrainConfig;
pub use critic::{critic_grad, critic_loss, CriticNet};
pub use eval::{evaluate_frontier, play_many};
pub use rollout::{
    collect_episode, play_episode, AgentStep, EpisodeRecord, Lineup, RolloutBatch, StepRecord,
};
pub use run::{checkpoint_dir, latest_checkpoint, MetricsRow, Trainer, METRICS_FILE};
pub use update::{build_training_data, Learner, StepStats, TrainingData};

use crate::arena::ArenaError;
use crate::league::LeagueError;
use crate::numkit::NumError;
use crate::policy::PolicyError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("episode {episode}: {source}")]
    Episode { episode: usize, source: ArenaError },
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    League(#[from] LeagueError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("non-finite value at step {step}: {what}")]
    NonFinite { step: usize, what: String },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint format {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl TrainError {
    /// True for errors caused by unreadable or inconsistent artifacts.
    pub fn is_corrupt(&self) -> bool {
        matches!(
            self,
            TrainError::Corrupt(_)
                | TrainError::Version { .. }
                | TrainError::Json(_)
                | TrainError::Csv(_)
                | TrainError::Num(NumError::Corrupt(_))
                | TrainError::Policy(
                    PolicyError::Corrupt(_)
                        | PolicyError::Version { .. }
                        | PolicyError::Json(_)
                        | PolicyError::Num(NumError::Corrupt(_))
                )
        )
    }
}

/// Stream tags for [`derive_seed`].
pub mod stream {
    pub const INIT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const ACT: u64 = 3;
    pub const OPPONENT: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const SHUFFLE: u64 = 6;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Every random stream in a run is a pure function of the run seed and a
/// path of indices, so results never depend on scheduling.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |h, &p| splitmix(h ^ splitmix(p)))
}
