//! Two-team heterogeneous grid battle with a scripted opponent.
//!
//! Team A is the learner side, team B is driven by [`scripted_opponent`].
//! Both teams are instantiated from the same roster and spawn mirrored.

mod config;
mod env;
mod replay;
mod scripted;

pub use config::{AgentTypeSpec, ArenaConfig, RewardWeights};
pub use env::{
    chebyshev, normalize_between, normalized_reward, Action, Agent, Arena, ArenaState, Outcome,
    StepResult, Team, DIRECTIONS,
};
pub use replay::{read_replay, ReplayLine, ReplayWriter};
pub use scripted::{scripted_action, scripted_opponent, scripted_opponent_into};

#[derive(Debug, thiserror::Error)]
pub enum ArenaError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("illegal action {action} for agent {agent}: {reason}")]
    IllegalAction {
        agent: usize,
        action: usize,
        reason: String,
    },
    #[error("unknown agent id {0}")]
    UnknownAgent(usize),
    #[error("agent {0} is dead")]
    DeadAgent(usize),
    #[error("episode already finished")]
    EpisodeOver,
    #[error("degenerate reward range [{min}, {max}]")]
    DegenerateRange { min: f64, max: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
