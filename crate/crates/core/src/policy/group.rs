use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::numkit::{
    entropy, masked_log_softmax, sample_from_log_probs, Activation, DType, Layer, MlpParams,
    Tensor,
};

use super::{PolicyError, TeamInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    /// Hidden widths between the observation and the action logits.
    pub hidden: Vec<usize>,
    /// Width of the hyper-network's single hidden layer.
    pub hyper_hidden: usize,
    /// How many of the final policy layers the hyper-network generates.
    pub generated_layers: usize,
    /// One trunk shared by all types instead of one per type.
    pub shared_trunk: bool,
    /// Scale of the initial generated output layer; small values start near uniform.
    pub head_init_scale: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            hyper_hidden: 32,
            generated_layers: 1,
            shared_trunk: false,
            head_init_scale: 0.01,
        }
    }
}

/// Shape of one generated layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
}

impl GeneratedLayer {
    pub fn param_len(&self) -> usize {
        self.n_out * self.n_in + self.n_out
    }
}

/// Splits the hyper-network output `θ_h` into generated layers. For each
/// layer the first `n_out × n_in` entries are the row-major weight, the
/// next `n_out` the bias.
pub fn split_generated(theta: &[f64], layout: &[GeneratedLayer]) -> Result<MlpParams, PolicyError> {
    let need: usize = layout.iter().map(GeneratedLayer::param_len).sum();
    if theta.len() != need {
        return Err(PolicyError::Shape(format!(
            "hyper output has {} values, layout needs {need}",
            theta.len()
        )));
    }
    let mut off = 0;
    let mut layers = Vec::with_capacity(layout.len());
    for g in layout {
        let nw = g.n_out * g.n_in;
        let weight = Tensor::new(vec![g.n_out, g.n_in], theta[off..off + nw].to_vec())?;
        let bias = Tensor::new(vec![g.n_out], theta[off + nw..off + nw + g.n_out].to_vec())?;
        off += g.param_len();
        layers.push(Layer {
            weight,
            bias,
            activation: g.activation,
        });
    }
    Ok(MlpParams::new(layers)?)
}

/// Runs the hyper-network on `F_h` and reshapes its output into layers.
pub fn hypernet_generate(
    hyper: &MlpParams,
    f_h: &[f64],
    layout: &[GeneratedLayer],
) -> Result<MlpParams, PolicyError> {
    if f_h.len() != hyper.in_dim() {
        return Err(PolicyError::Shape(format!(
            "F_h has length {}, hyper-network expects {}",
            f_h.len(),
            hyper.in_dim()
        )));
    }
    split_generated(&hyper.infer(f_h), layout)
}

/// Parameters of one agent type's policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TypePolicy {
    pub hyper: MlpParams,
    pub layout: Vec<GeneratedLayer>,
}

/// A policy for one type with its generated layers fixed for one `F_h`.
#[derive(Debug, Clone)]
pub struct PreparedPolicy<'a> {
    pub trunk: &'a MlpParams,
    pub generated: MlpParams,
}

/// Result of one action draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActOutput {
    pub action: usize,
    pub log_prob: f64,
    pub entropy: f64,
}

impl PreparedPolicy<'_> {
    pub fn logits(&self, obs: &[f64]) -> Vec<f64> {
        let h = self.trunk.infer(obs);
        self.generated.infer(&h)
    }

    pub fn act<R: Rng>(&self, obs: &[f64], mask: &[bool], rng: &mut R) -> Result<ActOutput, PolicyError> {
        let lp = masked_log_softmax(&self.logits(obs), mask)?;
        let (action, log_prob) = sample_from_log_probs(&lp, rng);
        Ok(ActOutput {
            action,
            log_prob,
            entropy: entropy(&lp),
        })
    }
}

/// One policy per agent type plus league bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGroup {
    pub version: u64,
    frozen: bool,
    pub omega: Option<f64>,
    config: PolicyConfig,
    obs_dim: usize,
    num_actions: usize,
    /// One per type, or a single shared trunk.
    trunks: Vec<MlpParams>,
    types: Vec<TypePolicy>,
}

/// Gradients with the same layout as a group's trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupGrads {
    pub trunks: Vec<MlpParams>,
    pub hypers: Vec<MlpParams>,
}

impl GroupGrads {
    pub fn add_scaled(&mut self, alpha: f64, other: &GroupGrads) {
        for (a, b) in self.trunks.iter_mut().zip(&other.trunks) {
            a.add_scaled(alpha, b);
        }
        for (a, b) in self.hypers.iter_mut().zip(&other.hypers) {
            a.add_scaled(alpha, b);
        }
    }
}

impl PolicyGroup {
    pub fn new<R: Rng>(
        config: PolicyConfig,
        num_types: usize,
        obs_dim: usize,
        num_actions: usize,
        rng: &mut R,
    ) -> Result<Self, PolicyError> {
        if num_types == 0 {
            return Err(PolicyError::Shape("a policy group needs at least one type".into()));
        }
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(&config.hidden);
        dims.push(num_actions);
        let n_layers = dims.len() - 1;
        if config.generated_layers == 0 || config.generated_layers >= n_layers {
            return Err(PolicyError::Shape(format!(
                "generated_layers must be in 1..{n_layers} for {} hidden layers",
                config.hidden.len()
            )));
        }
        let split = n_layers - config.generated_layers;
        let acts: Vec<Activation> = (0..n_layers)
            .map(|k| {
                if k + 1 == n_layers {
                    Activation::Identity
                } else {
                    Activation::Relu
                }
            })
            .collect();
        let layout: Vec<GeneratedLayer> = (split..n_layers)
            .map(|k| GeneratedLayer {
                n_in: dims[k],
                n_out: dims[k + 1],
                activation: acts[k],
            })
            .collect();
        let theta_len: usize = layout.iter().map(GeneratedLayer::param_len).sum();
        let n_trunks = if config.shared_trunk { 1 } else { num_types };
        let mut trunks = Vec::with_capacity(n_trunks);
        for _ in 0..n_trunks {
            trunks.push(MlpParams::init(&dims[..=split], &acts[..split], 1.0, rng)?);
        }
        let mut types = Vec::with_capacity(num_types);
        for _ in 0..num_types {
            let mut hyper = MlpParams::init(
                &[2 * num_types, config.hyper_hidden, theta_len],
                &[Activation::Relu, Activation::Identity],
                0.1,
                rng,
            )?;
            // The output bias starts as an ordinary initialisation of the
            // generated layers, so θ_h is a regular layer plus a small
            // F_h-dependent perturbation.
            let base = MlpParams::init(
                &dims[split..],
                &acts[split..],
                config.head_init_scale,
                rng,
            )?;
            let flat: Vec<f64> = base.slices().concat();
            let last = hyper.layers_mut().last_mut().unwrap();
            last.bias.data_mut().copy_from_slice(&flat);
            let scale = config.head_init_scale.min(1.0);
            last.weight.data_mut().iter_mut().for_each(|w| *w *= scale);
            types.push(TypePolicy {
                hyper,
                layout: layout.clone(),
            });
        }
        Ok(Self {
            version: 0,
            frozen: false,
            omega: None,
            config,
            obs_dim,
            num_actions,
            trunks,
            types,
        })
    }

    pub(crate) fn from_parts(
        version: u64,
        frozen: bool,
        omega: Option<f64>,
        config: PolicyConfig,
        obs_dim: usize,
        num_actions: usize,
        trunks: Vec<MlpParams>,
        types: Vec<TypePolicy>,
    ) -> Self {
        Self {
            version,
            frozen,
            omega,
            config,
            obs_dim,
            num_actions,
            trunks,
            types,
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn trunk_index(&self, type_idx: usize) -> usize {
        if self.config.shared_trunk {
            0
        } else {
            type_idx
        }
    }

    pub fn trunk(&self, type_idx: usize) -> &MlpParams {
        &self.trunks[self.trunk_index(type_idx)]
    }

    pub fn trunks(&self) -> &[MlpParams] {
        &self.trunks
    }

    pub fn type_policy(&self, type_idx: usize) -> Result<&TypePolicy, PolicyError> {
        self.types.get(type_idx).ok_or(PolicyError::UnknownType(type_idx))
    }

    pub fn type_policies(&self) -> &[TypePolicy] {
        &self.types
    }

    /// Mutable access to trainable parameters; refused for frozen groups.
    pub fn params_mut(&mut self) -> Result<(&mut [MlpParams], &mut [TypePolicy]), PolicyError> {
        if self.frozen {
            return Err(PolicyError::Frozen(self.version));
        }
        Ok((&mut self.trunks, &mut self.types))
    }

    pub fn zero_grads(&self) -> GroupGrads {
        GroupGrads {
            trunks: self.trunks.iter().map(MlpParams::zeros_like).collect(),
            hypers: self.types.iter().map(|t| t.hyper.zeros_like()).collect(),
        }
    }

    /// Generates the `F_h`-dependent layers for `type_idx`.
    pub fn prepare(&self, type_idx: usize, f_h: &[f64]) -> Result<PreparedPolicy<'_>, PolicyError> {
        let tp = self.type_policy(type_idx)?;
        Ok(PreparedPolicy {
            trunk: self.trunk(type_idx),
            generated: hypernet_generate(&tp.hyper, f_h, &tp.layout)?,
        })
    }

    /// Samples an action for an agent of `type_idx` from its local
    /// observation and the team-information vector.
    pub fn act<R: Rng>(
        &self,
        type_idx: usize,
        obs: &[f64],
        team_info: &TeamInfo,
        mask: &[bool],
        rng: &mut R,
    ) -> Result<ActOutput, PolicyError> {
        if obs.len() != self.obs_dim {
            return Err(PolicyError::Shape(format!(
                "observation length {} != {}",
                obs.len(),
                self.obs_dim
            )));
        }
        self.prepare(type_idx, &team_info.concat())?.act(obs, mask, rng)
    }

    /// Logits without sampling; used by tests and analysis.
    pub fn logits(&self, type_idx: usize, obs: &[f64], team_info: &TeamInfo) -> Result<Vec<f64>, PolicyError> {
        Ok(self.prepare(type_idx, &team_info.concat())?.logits(obs))
    }

    /// All parameter tensors in a fixed order with stable names.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, t) in self.trunks.iter().enumerate() {
            for (k, l) in t.layers().iter().enumerate() {
                out.push((format!("trunk{i}_l{k}_w"), &l.weight));
                out.push((format!("trunk{i}_l{k}_b"), &l.bias));
            }
        }
        for (j, t) in self.types.iter().enumerate() {
            for (k, l) in t.hyper.layers().iter().enumerate() {
                out.push((format!("type{j}_hyper_l{k}_w"), &l.weight));
                out.push((format!("type{j}_hyper_l{k}_b"), &l.bias));
            }
        }
        out
    }

    /// SHA-256 over every parameter tensor's f64 byte layout.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.named_tensors() {
            h.update(name.as_bytes());
            h.update(t.to_bytes(DType::F64));
        }
        hex::encode(h.finalize())
    }

    pub fn num_params(&self) -> usize {
        self.trunks.iter().map(MlpParams::num_params).sum::<usize>()
            + self.types.iter().map(|t| t.hyper.num_params()).sum::<usize>()
    }
}

/// Snapshots the frontier as a frozen league candidate. The frontier's
/// version counter advances and the copy takes the new id.
pub fn duplicate_and_freeze(frontier: &mut PolicyGroup, omega: f64) -> Result<PolicyGroup, PolicyError> {
    if frontier.frozen {
        return Err(PolicyError::Frozen(frontier.version));
    }
    if !(0.0..=1.0).contains(&omega) {
        return Err(PolicyError::OmegaRange(omega));
    }
    frontier.version += 1;
    let mut copy = frontier.clone();
    copy.frozen = true;
    copy.omega = Some(omega);
    Ok(copy)
}

impl PolicyGroup {
    /// A frozen copy with the same version id, leaving `self` untouched.
    /// Used for control rows in the analyses.
    pub fn frozen_snapshot(&self, omega: f64) -> Result<PolicyGroup, PolicyError> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(PolicyError::OmegaRange(omega));
        }
        let mut copy = self.clone();
        copy.frozen = true;
        copy.omega = Some(omega);
        Ok(copy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{build_frozen_team_info, build_team_info, MixedAssignment};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_group(seed: u64) -> PolicyGroup {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = PolicyConfig {
            hidden: vec![8, 8],
            hyper_hidden: 6,
            head_init_scale: 1.0,
            ..PolicyConfig::default()
        };
        PolicyGroup::new(cfg, 3, 5, 4, &mut rng).unwrap()
    }

    #[test]
    fn generated_layer_length() {
        let g = GeneratedLayer {
            n_in: 8,
            n_out: 16,
            activation: Activation::Identity,
        };
        assert_eq!(g.param_len(), 144);
        let theta: Vec<f64> = (0..144).map(|i| i as f64).collect();
        let p = split_generated(&theta, &[g]).unwrap();
        assert_eq!(p.layers()[0].weight.data()[..3], [0.0, 1.0, 2.0]);
        assert_eq!(p.layers()[0].weight.data()[8], 8.0);
        assert_eq!(p.layers()[0].bias.data()[0], 128.0);
        assert!(split_generated(&theta[..143], &[g]).is_err());
    }

    #[test]
    fn zero_hyper_generates_zero_layer() {
        let mut g = small_group(1);
        {
            let (_, types) = g.params_mut().unwrap();
            types[0].hyper.scale(0.0);
        }
        let fh = build_frozen_team_info(0, 3).unwrap();
        let logits = g.logits(0, &[0.3, -0.1, 0.2, 0.9, 1.0], &fh).unwrap();
        assert_eq!(logits, vec![0.0; 4]);
    }

    #[test]
    fn act_is_deterministic_per_seed() {
        let g = small_group(2);
        let fh = build_frozen_team_info(1, 3).unwrap();
        let obs = [0.1, 0.2, 0.3, 0.4, 0.5];
        let mask = [true, true, false, true];
        let a = g.act(1, &obs, &fh, &mask, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = g.act(1, &obs, &fh, &mask, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.action, 2);
    }

    #[test]
    fn same_type_agents_share_distribution() {
        let g = small_group(3);
        let fh = build_frozen_team_info(2, 3).unwrap();
        let obs = [0.5, 0.0, -0.5, 0.25, 1.0];
        assert_eq!(g.logits(2, &obs, &fh).unwrap(), g.logits(2, &obs, &fh).unwrap());
    }

    #[test]
    fn teammate_omega_changes_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..20 {
            let mut grng = ChaCha8Rng::seed_from_u64(seed);
            let g = PolicyGroup::new(PolicyConfig::default(), 3, 12, 9, &mut grng).unwrap();
            let obs: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ff = build_team_info(0, &MixedAssignment::all_frontier(3), None).unwrap();
            let mixed = build_team_info(0, &MixedAssignment::with_past(3, 2, 0).unwrap(), Some(0.3)).unwrap();
            let a = g.logits(0, &obs, &ff).unwrap();
            let b = g.logits(0, &obs, &mixed).unwrap();
            let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
            assert!(diff > 1e-6, "seed {seed}: logits unchanged");
        }
    }

    #[test]
    fn freeze_and_versions() {
        let mut f = small_group(4);
        let a = duplicate_and_freeze(&mut f, 0.25).unwrap();
        let b = duplicate_and_freeze(&mut f, 0.5).unwrap();
        assert!(a.is_frozen() && b.is_frozen() && !f.is_frozen());
        assert_ne!(a.version, b.version);
        assert!(b.version > a.version);
        assert_eq!(a.omega, Some(0.25));
        let mut a2 = a.clone();
        assert!(matches!(a2.params_mut(), Err(PolicyError::Frozen(_))));
        assert!(duplicate_and_freeze(&mut a2, 0.1).is_err());
    }

    #[test]
    fn copy_unaffected_by_frontier_updates() {
        let mut f = small_group(6);
        let copy = duplicate_and_freeze(&mut f, 0.1).unwrap();
        let before = copy.param_hash();
        for _ in 0..10 {
            let (trunks, types) = f.params_mut().unwrap();
            trunks[0].layers_mut()[0].weight.data_mut()[0] += 0.5;
            types[1].hyper.layers_mut()[0].bias.data_mut()[0] -= 0.25;
        }
        assert_eq!(copy.param_hash(), before);
        assert_ne!(f.param_hash(), before);
    }

    #[test]
    fn shared_trunk_option() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = PolicyConfig {
            shared_trunk: true,
            ..PolicyConfig::default()
        };
        let g = PolicyGroup::new(cfg, 3, 10, 9, &mut rng).unwrap();
        assert_eq!(g.trunks().len(), 1);
        assert_eq!(g.trunk_index(2), 0);
    }

    #[test]
    fn two_generated_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = PolicyConfig {
            generated_layers: 2,
            ..PolicyConfig::default()
        };
        let g = PolicyGroup::new(cfg, 3, 10, 9, &mut rng).unwrap();
        assert_eq!(g.trunk(0).layers().len(), 1);
        assert_eq!(g.type_policy(0).unwrap().layout.len(), 2);
        let bad = PolicyConfig {
            generated_layers: 3,
            ..PolicyConfig::default()
        };
        assert!(PolicyGroup::new(bad, 3, 10, 9, &mut rng).is_err());
    }
}
