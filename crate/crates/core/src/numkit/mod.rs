//! Small dense numeric kernel: tensors, MLPs with backward passes, Adam,
//! masked categorical sampling, GAE and the dual-clip PPO surrogate.

mod adam;
mod gae;
mod mlp;
mod ppo;
mod sample;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gae::gae_advantages;
pub use mlp::{Activation, Layer, MlpCache, MlpParams};
pub use ppo::{dual_clip_ppo_loss, ClipRegion};
pub use sample::{categorical_sample, entropy, masked_log_softmax, sample_from_log_probs};
pub use tensor::{axpy, dot, DType, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NumError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("cache does not belong to these parameters")]
    StaleCache,
    #[error("no legal action")]
    NoLegalAction,
    #[error("corrupt tensor: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
