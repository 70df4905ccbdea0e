//! Oracles shared by the module tests and the acceptance run.
#![allow(dead_code)]

use hlt::league::{sample_assignment, sample_combination, Admission, Combination, League, SamplerConfig};
use hlt::numkit::{dual_clip_ppo_loss, masked_log_softmax, ClipRegion, MlpParams};
use hlt::policy::{
    duplicate_and_freeze, ppo_policy_grad, ppo_policy_objective, PolicyConfig, PolicyGroup, PolicySamples,
    PpoLossConfig,
};
use hlt::trainer::{critic_grad, critic_loss, CriticNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_frontier() -> PolicyGroup {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = PolicyConfig {
        hidden: vec![3, 3],
        hyper_hidden: 2,
        ..PolicyConfig::default()
    };
    PolicyGroup::new(cfg, 3, 4, 3, &mut rng).unwrap()
}

// ---- league filter ----

/// Straightforward restatement of the filter: keep everything up to
/// capacity, otherwise find the smallest adjacent ω gap (first one on ties)
/// and drop the newer of the two.
pub fn reference_filter(members: &mut Vec<(f64, u64)>, cand: (f64, u64), capacity: usize) -> Admission {
    members.push(cand);
    members.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    if members.len() <= capacity {
        return Admission::Accepted;
    }
    let gaps: Vec<f64> = members.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let k = gaps.iter().position(|&g| g <= min + 1e-9).unwrap();
    let drop = if members[k].1 > members[k + 1].1 { k } else { k + 1 };
    let (_, v) = members.remove(drop);
    if v == cand.1 {
        Admission::Rejected
    } else {
        Admission::AcceptedWithEviction(v)
    }
}

/// Runs `sequences` random admission sequences through the league and the
/// reference. `capacity` of `None` draws one per sequence. Returns how many
/// rejections were seen.
pub fn filter_matches_reference(sequences: usize, capacity: Option<usize>, seed: u64) -> Result<usize, String> {
    let mut frontier = tiny_frontier();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejected = 0;
    for seq in 0..sequences {
        let cap = capacity.unwrap_or_else(|| rng.gen_range(1..=6));
        let len = rng.gen_range(1..=12u64);
        let grid = seq % 2 == 0;
        let mut league = League::new(cap).unwrap();
        let mut reference: Vec<(f64, u64)> = Vec::new();
        for step in 0..len {
            // half the sequences use a coarse grid to force exact ties
            let w = if grid {
                rng.gen_range(0..=20) as f64 / 20.0
            } else {
                rng.gen_range(0.0..=1.0)
            };
            let cand = duplicate_and_freeze(&mut frontier, w).unwrap();
            let v = cand.version;
            let got = league.try_admit(cand, w, step).unwrap();
            let want = reference_filter(&mut reference, (w, v), cap);
            if got != want {
                return Err(format!("sequence {seq} step {step}: {got:?} vs reference {want:?}"));
            }
            rejected += (got == Admission::Rejected) as usize;
            let versions: Vec<u64> = league.members().iter().map(|m| m.version()).collect();
            let ref_versions: Vec<u64> = reference.iter().map(|m| m.1).collect();
            if versions != ref_versions {
                return Err(format!("sequence {seq} step {step}: members {versions:?} vs {ref_versions:?}"));
            }
        }
    }
    Ok(rejected)
}

// ---- samplers ----

pub struct SamplerCounts {
    pub draws: usize,
    pub frontier_only: usize,
    pub per_member: Vec<usize>,
    pub per_type: Vec<usize>,
}

pub fn sampler_counts(draws: usize, league_len: usize, num_types: usize, p_f: f64, seed: u64) -> SamplerCounts {
    let cfg = SamplerConfig { p_f };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = SamplerCounts {
        draws,
        frontier_only: 0,
        per_member: vec![0; league_len],
        per_type: vec![0; num_types],
    };
    for _ in 0..draws {
        let comb = sample_combination(league_len, &cfg, &mut rng).unwrap();
        match comb {
            Combination::FrontierFrontier => c.frontier_only += 1,
            Combination::FrontierPast(l) => c.per_member[l] += 1,
        }
        let a = sample_assignment(comb, num_types, &mut rng).unwrap();
        if let Some(t) = a.selected_type() {
            c.per_type[t] += 1;
        }
    }
    c
}

// ---- gradients ----

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
const OBS: usize = 6;
const ACTS: usize = 5;
const TYPES: usize = 3;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Zero-initialised biases put whole layers exactly on a ReLU kink when the
/// layer below is dead; moving them off zero keeps differences one-sided.
pub fn jitter_biases(params: &mut MlpParams, rng: &mut ChaCha8Rng) {
    for layer in params.layers_mut() {
        for b in layer.bias.data_mut() {
            *b += rng.gen_range(-0.3..0.3);
        }
    }
}

fn small_group(inst: u64, rng: &mut ChaCha8Rng) -> PolicyGroup {
    let config = PolicyConfig {
        hidden: vec![8, 7],
        hyper_hidden: 6,
        generated_layers: if inst % 4 == 3 { 2 } else { 1 },
        shared_trunk: inst % 5 == 4,
        head_init_scale: 0.5,
    };
    let mut group = PolicyGroup::new(config, TYPES, OBS, ACTS, rng).unwrap();
    let (trunks, types) = group.params_mut().unwrap();
    for p in trunks.iter_mut().chain(types.iter_mut().map(|t| &mut t.hyper)) {
        jitter_biases(p, rng);
    }
    group
}

/// Samples whose old log-probs put the ratio well inside a chosen piece of
/// the surrogate, so central differences never straddle a kink.
fn samples_for(group: &PolicyGroup, t: usize, rng: &mut ChaCha8Rng) -> PolicySamples {
    const RATIOS: [f64; 5] = [0.5, 0.95, 1.1, 1.6, 4.5];
    let mut s = PolicySamples::new(OBS, ACTS);
    for _ in 0..8 {
        let obs: Vec<f64> = (0..OBS).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let mut f_h: Vec<f64> = (0..TYPES)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.0..1.0) })
            .collect();
        f_h.extend((0..TYPES).map(|k| (k == t) as u8 as f64));
        let mut mask: Vec<bool> = (0..ACTS).map(|_| rng.gen_bool(0.7)).collect();
        let a = rng.gen_range(0..ACTS);
        mask[a] = true;
        let logits = group.prepare(t, &f_h).unwrap().logits(&obs);
        let lp = masked_log_softmax(&logits, &mask).unwrap();
        let ratio = RATIOS[rng.gen_range(0..RATIOS.len())];
        let adv = rng.gen_range(0.2..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        s.push(&obs, &f_h, &mask, a, lp[a] - ratio.ln(), adv);
    }
    s
}

fn locate(params: &MlpParams, mut k: usize) -> (usize, usize) {
    for (i, s) in params.slices().iter().enumerate() {
        if k < s.len() {
            return (i, k);
        }
        k -= s.len();
    }
    panic!("coordinate out of range")
}

fn coord(params: &MlpParams, k: usize) -> f64 {
    let (i, off) = locate(params, k);
    params.slices()[i][off]
}

/// Central difference of `f` in coordinate `k` of `params`, restoring it.
fn central(params: &mut MlpParams, k: usize, mut f: impl FnMut(&MlpParams) -> f64) -> f64 {
    let (slice, off) = locate(params, k);
    let orig = params.slices_mut()[slice][off];
    params.slices_mut()[slice][off] = orig + FD_STEP;
    let up = f(params);
    params.slices_mut()[slice][off] = orig - FD_STEP;
    let down = f(params);
    params.slices_mut()[slice][off] = orig;
    (up - down) / (2.0 * FD_STEP)
}

/// Worst relative error per network part over the checked coordinates.
#[derive(Debug, Default, Clone, Copy)]
pub struct GradReport {
    pub instances: usize,
    pub checks: usize,
    pub trunk: f64,
    pub hyper: f64,
    pub critic: f64,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.trunk.max(self.hyper).max(self.critic)
    }
}

/// Policy gradients (trunk and hyper-network) against central differences
/// of the objective, three coordinates of each per instance.
pub fn policy_gradient_check(instances: u64, report: &mut GradReport) {
    let cfg = PpoLossConfig::default();
    for inst in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(inst);
        let group = small_group(inst, &mut rng);
        let t = (inst % TYPES as u64) as usize;
        let samples = samples_for(&group, t, &mut rng);
        let idx: Vec<usize> = (0..samples.len()).collect();
        let scale = 1.0 / idx.len() as f64;
        let mut grads = group.zero_grads();
        ppo_policy_grad(&group, t, &samples, &idx, &cfg, scale, &mut grads).unwrap();
        let ti = group.trunk_index(t);
        for (u, h) in grads.hypers.iter().enumerate() {
            assert!(u == t || h.sq_norm() == 0.0, "gradient leaked into type {u}");
        }
        for _ in 0..3 {
            let k = rng.gen_range(0..grads.trunks[ti].num_params());
            let analytic = coord(&grads.trunks[ti], k);
            let mut trunk = group.trunk(t).clone();
            let numeric = central(&mut trunk, k, |p| {
                let mut g = group.clone();
                g.params_mut().unwrap().0[ti] = p.clone();
                ppo_policy_objective(&g, t, &samples, &idx, &cfg, scale).unwrap()
            });
            report.trunk = report.trunk.max(rel_err(analytic, numeric));

            let k = rng.gen_range(0..grads.hypers[t].num_params());
            let analytic = coord(&grads.hypers[t], k);
            let mut hyper = group.type_policy(t).unwrap().hyper.clone();
            let numeric = central(&mut hyper, k, |p| {
                let mut g = group.clone();
                g.params_mut().unwrap().1[t].hyper = p.clone();
                ppo_policy_objective(&g, t, &samples, &idx, &cfg, scale).unwrap()
            });
            report.hyper = report.hyper.max(rel_err(analytic, numeric));
            report.checks += 2;
        }
        report.instances += 1;
    }
}

pub fn critic_gradient_check(instances: u64, report: &mut GradReport) {
    for inst in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
        let dim = 7;
        let mut critic = CriticNet::new(dim, &[6, 5], &mut rng).unwrap();
        jitter_biases(&mut critic.params, &mut rng);
        let n = 10;
        let inputs: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let idx: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
        let scale = 0.3;
        let mut grads = critic.params.zeros_like();
        let sq = critic_grad(&critic, &inputs, &targets, &idx, scale, &mut grads).unwrap();
        let loss = critic_loss(&critic, &inputs, &targets, &idx, scale);
        assert!((sq * scale - loss).abs() < 1e-10);
        for _ in 0..3 {
            let k = rng.gen_range(0..critic.params.num_params());
            let analytic = coord(&grads, k);
            let mut params = critic.params.clone();
            let numeric = central(&mut params, k, |p| {
                let c = CriticNet { params: p.clone() };
                critic_loss(&c, &inputs, &targets, &idx, scale)
            });
            report.critic = report.critic.max(rel_err(analytic, numeric));
            report.checks += 1;
        }
        report.instances += 1;
    }
}

/// Textbook dual-clip objective (to be maximised) and its slope in the ratio.
fn dual_clip_oracle(r: f64, a: f64, eps: f64, c: f64) -> (f64, f64) {
    let clipped = r.clamp(1.0 - eps, 1.0 + eps);
    let (unclipped_v, clipped_v) = (r * a, clipped * a);
    let (mut obj, mut slope) = if unclipped_v <= clipped_v {
        (unclipped_v, a)
    } else {
        (clipped_v, if clipped == r { a } else { 0.0 })
    };
    if a < 0.0 && c * a > obj {
        obj = c * a;
        slope = 0.0;
    }
    (obj, slope)
}

/// Exhaustive grid over (ratio, A, ε, c). Returns the number of points.
pub fn dual_clip_grid() -> Result<usize, String> {
    let mut seen = Vec::new();
    let mut points = 0;
    for eps in [0.1, 0.2, 0.3] {
        for c in [2.0, 3.0, 5.0] {
            for ri in 0..=140 {
                let r = ri as f64 * 0.05;
                for ai in -8..=8 {
                    let a = ai as f64 * 0.25;
                    let (loss, grad, region) = dual_clip_ppo_loss(r, a, eps, c).map_err(|e| e.to_string())?;
                    let (obj, slope) = dual_clip_oracle(r, a, eps, c);
                    if (loss + obj).abs() > 1e-12 {
                        return Err(format!("loss at r={r} A={a} eps={eps} c={c}: {loss} vs {}", -obj));
                    }
                    let near_kink = [1.0 - eps, 1.0 + eps, c].iter().any(|k| (r - k).abs() < 1e-9);
                    if !near_kink && (grad + slope).abs() > 1e-12 {
                        return Err(format!("slope at r={r} A={a} eps={eps} c={c}: {grad} vs {}", -slope));
                    }
                    if !seen.contains(&region) {
                        seen.push(region);
                    }
                    points += 1;
                }
            }
        }
    }
    for region in [
        ClipRegion::PositiveUnclipped,
        ClipRegion::PositiveClipped,
        ClipRegion::NegativeClipped,
        ClipRegion::NegativeUnclipped,
        ClipRegion::DualClipped,
    ] {
        if !seen.contains(&region) {
            return Err(format!("{region:?} never produced"));
        }
    }
    Ok(points)
}
