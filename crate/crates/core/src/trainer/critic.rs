use rand::Rng;

use crate::numkit::{Activation, MlpParams, Tensor};

use super::TrainError;

/// The single centralised value network. Input: every learner-team
/// observation (zeros for dead agents) followed by the episode's `F_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub params: MlpParams,
}

impl CriticNet {
    pub fn new<R: Rng>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self, TrainError> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut acts = vec![Activation::Relu; hidden.len()];
        acts.push(Activation::Identity);
        Ok(Self {
            params: MlpParams::init(&dims, &acts, 1.0, rng)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.params.in_dim()
    }

    pub fn value(&self, input: &[f64]) -> f64 {
        self.params.infer(input)[0]
    }
}

fn gather(inputs: &[f64], dim: usize, idx: &[usize]) -> Vec<f64> {
    let mut x = Vec::with_capacity(idx.len() * dim);
    for &i in idx {
        x.extend_from_slice(&inputs[i * dim..(i + 1) * dim]);
    }
    x
}

/// `Σ_i scale · ½ (V(x_i) − target_i)²` over `idx`.
pub fn critic_loss(
    critic: &CriticNet,
    inputs: &[f64],
    targets: &[f64],
    idx: &[usize],
    scale: f64,
) -> f64 {
    let dim = critic.input_dim();
    idx.iter()
        .map(|&i| {
            let d = critic.value(&inputs[i * dim..(i + 1) * dim]) - targets[i];
            scale * 0.5 * d * d
        })
        .sum()
}

/// Accumulates the gradient of [`critic_loss`] into `grads`; returns the
/// unscaled squared-error sum `Σ ½ d²`.
pub fn critic_grad(
    critic: &CriticNet,
    inputs: &[f64],
    targets: &[f64],
    idx: &[usize],
    scale: f64,
    grads: &mut MlpParams,
) -> Result<f64, TrainError> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let dim = critic.input_dim();
    let x = Tensor::new(vec![idx.len(), dim], gather(inputs, dim, idx))?;
    let (v, cache) = critic.params.forward(&x)?;
    let mut sq = 0.0;
    let dv: Vec<f64> = v
        .data()
        .iter()
        .zip(idx)
        .map(|(&v, &i)| {
            let d = v - targets[i];
            sq += 0.5 * d * d;
            scale * d
        })
        .collect();
    critic.params.backward_params_into(&cache, &dv, grads)?;
    Ok(sq)
}
