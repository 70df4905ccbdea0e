//! Dual-clip PPO objective for one agent type, with gradients through the
//! generated layers, the hyper-network and the trunk.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::numkit::{dual_clip_ppo_loss, masked_log_softmax, ClipRegion, MlpParams, Tensor};

use super::{split_generated, GroupGrads, PolicyError, PolicyGroup};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoLossConfig {
    pub clip_eps: f64,
    pub dual_c: f64,
    pub entropy_coef: f64,
}

impl Default for PpoLossConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            dual_c: 3.0,
            entropy_coef: 0.01,
        }
    }
}

/// Flat storage of one type's training samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicySamples {
    pub obs_dim: usize,
    pub num_actions: usize,
    pub obs: Vec<f64>,
    pub masks: Vec<bool>,
    /// Index into `fh_table` per sample.
    pub fh_index: Vec<u32>,
    pub fh_table: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl PolicySamples {
    pub fn new(obs_dim: usize, num_actions: usize) -> Self {
        Self {
            obs_dim,
            num_actions,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(
        &mut self,
        obs: &[f64],
        f_h: &[f64],
        mask: &[bool],
        action: usize,
        old_log_prob: f64,
        advantage: f64,
    ) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        debug_assert_eq!(mask.len(), self.num_actions);
        self.obs.extend_from_slice(obs);
        self.masks.extend_from_slice(mask);
        let k = match self.fh_table.iter().position(|f| f.as_slice() == f_h) {
            Some(k) => k,
            None => {
                self.fh_table.push(f_h.to_vec());
                self.fh_table.len() - 1
            }
        };
        self.fh_index.push(k as u32);
        self.actions.push(action);
        self.old_log_probs.push(old_log_prob);
        self.advantages.push(advantage);
    }

    pub fn append(&mut self, other: &PolicySamples) {
        for i in 0..other.len() {
            self.push(
                &other.obs[i * other.obs_dim..(i + 1) * other.obs_dim],
                &other.fh_table[other.fh_index[i] as usize],
                &other.masks[i * other.num_actions..(i + 1) * other.num_actions],
                other.actions[i],
                other.old_log_probs[i],
                other.advantages[i],
            );
        }
    }

    pub fn obs_row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn mask_row(&self, i: usize) -> &[bool] {
        &self.masks[i * self.num_actions..(i + 1) * self.num_actions]
    }
}

/// Sums over the processed samples (divide by the count for means).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub samples: usize,
    pub policy_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clipped: usize,
}

impl LossStats {
    pub fn merge(&mut self, o: &LossStats) {
        self.samples += o.samples;
        self.policy_loss += o.policy_loss;
        self.entropy += o.entropy;
        self.approx_kl += o.approx_kl;
        self.clipped += o.clipped;
    }
}

/// Objective value only, `Σ_i scale·(ppo_i − c_H·H_i)` over `idx`.
pub fn ppo_policy_objective(
    group: &PolicyGroup,
    type_idx: usize,
    samples: &PolicySamples,
    idx: &[usize],
    cfg: &PpoLossConfig,
    scale: f64,
) -> Result<f64, PolicyError> {
    let mut total = 0.0;
    let mut prepared = BTreeMap::new();
    for &i in idx {
        let k = samples.fh_index[i];
        if let std::collections::btree_map::Entry::Vacant(e) = prepared.entry(k) {
            e.insert(group.prepare(type_idx, &samples.fh_table[k as usize])?);
        }
        let lp = masked_log_softmax(&prepared[&k].logits(samples.obs_row(i)), samples.mask_row(i))?;
        let a = samples.actions[i];
        let ratio = (lp[a] - samples.old_log_probs[i]).exp();
        let (l, _, _) = dual_clip_ppo_loss(ratio, samples.advantages[i], cfg.clip_eps, cfg.dual_c)?;
        let h = crate::numkit::entropy(&lp);
        total += scale * (l - cfg.entropy_coef * h);
    }
    Ok(total)
}

/// Accumulates `scale ×` the gradient of the per-sample objective over
/// `idx` into `grads` (trunk slot of this type and its hyper-network slot).
pub fn ppo_policy_grad(
    group: &PolicyGroup,
    type_idx: usize,
    samples: &PolicySamples,
    idx: &[usize],
    cfg: &PpoLossConfig,
    scale: f64,
    grads: &mut GroupGrads,
) -> Result<LossStats, PolicyError> {
    let mut stats = LossStats::default();
    if idx.is_empty() {
        return Ok(stats);
    }
    let tp = group.type_policy(type_idx)?;
    let trunk = group.trunk(type_idx);
    let n_act = samples.num_actions;

    let mut x = Vec::with_capacity(idx.len() * samples.obs_dim);
    for &i in idx {
        x.extend_from_slice(samples.obs_row(i));
    }
    let (h, trunk_cache) = trunk.forward(&Tensor::new(vec![idx.len(), samples.obs_dim], x)?)?;
    let hid = h.last_dim();
    let h = h.data();
    let mut dh = vec![0.0; h.len()];

    // rows of `idx` grouped by F_h, in first-seen key order
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (row, &i) in idx.iter().enumerate() {
        groups.entry(samples.fh_index[i]).or_default().push(row);
    }

    for (key, rows) in &groups {
        let f_h = &samples.fh_table[*key as usize];
        let (theta, hyper_cache) = tp.hyper.forward(&Tensor::vector(f_h.clone())?)?;
        let generated: MlpParams = split_generated(theta.data(), &tp.layout)?;
        let mut hin = Vec::with_capacity(rows.len() * hid);
        for &r in rows {
            hin.extend_from_slice(&h[r * hid..(r + 1) * hid]);
        }
        let (logits, gen_cache) = generated.forward(&Tensor::new(vec![rows.len(), hid], hin)?)?;
        let logits = logits.data();
        let mut dlogits = vec![0.0; rows.len() * n_act];
        for (gr, &r) in rows.iter().enumerate() {
            let i = idx[r];
            let z = &logits[gr * n_act..(gr + 1) * n_act];
            let lp = masked_log_softmax(z, samples.mask_row(i))?;
            let a = samples.actions[i];
            let log_ratio = lp[a] - samples.old_log_probs[i];
            let ratio = log_ratio.exp();
            let (l, dl_dratio, region) =
                dual_clip_ppo_loss(ratio, samples.advantages[i], cfg.clip_eps, cfg.dual_c)?;
            let ent = crate::numkit::entropy(&lp);
            stats.samples += 1;
            stats.policy_loss += l;
            stats.entropy += ent;
            stats.approx_kl += (ratio - 1.0) - log_ratio;
            if !matches!(region, ClipRegion::PositiveUnclipped | ClipRegion::NegativeUnclipped) {
                stats.clipped += 1;
            }
            // d/dz of scale·(l − c·H)
            let dl_dlp = dl_dratio * ratio;
            let dz = &mut dlogits[gr * n_act..(gr + 1) * n_act];
            for (j, dzj) in dz.iter_mut().enumerate() {
                if lp[j] == f64::NEG_INFINITY {
                    continue;
                }
                let p = lp[j].exp();
                let onehot = if j == a { 1.0 } else { 0.0 };
                let d_lp = dl_dlp * (onehot - p);
                let d_ent = -p * (lp[j] + ent);
                *dzj = scale * (d_lp - cfg.entropy_coef * d_ent);
            }
        }
        let mut gen_grads = generated.zeros_like();
        let dh_rows = generated.backward_into(&gen_cache, &dlogits, &mut gen_grads)?;
        for (gr, &r) in rows.iter().enumerate() {
            for (d, s) in dh[r * hid..(r + 1) * hid]
                .iter_mut()
                .zip(&dh_rows[gr * hid..(gr + 1) * hid])
            {
                *d += s;
            }
        }
        let dtheta: Vec<f64> = gen_grads.slices().concat();
        tp.hyper
            .backward_into(&hyper_cache, &dtheta, &mut grads.hypers[type_idx])?;
    }
    let ti = group.trunk_index(type_idx);
    trunk.backward_params_into(&trunk_cache, &dh, &mut grads.trunks[ti])?;
    Ok(stats)
}
