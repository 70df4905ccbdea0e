//! Win rates of simple hand-written team-A policies against the scripted side.
//!
//! `cargo run --release --example baselines -- 500`

use hlt::arena::{chebyshev, scripted_action, Action, Arena, ArenaConfig, Outcome, Team};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Policy = dyn Fn(&Arena, usize, &mut ChaCha8Rng) -> usize;

fn run(name: &str, episodes: u64, policy: &Policy) {
    let cfg = ArenaConfig::default();
    let (mut wins, mut draws, mut reward) = (0, 0, 0.0);
    for ep in 0..episodes {
        let (mut arena, _) = Arena::reset(cfg.clone(), ep).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + ep);
        let mut acts = vec![0; cfg.num_agents()];
        loop {
            for a in arena.state().agents.iter().filter(|a| a.alive) {
                acts[a.id] = match a.team {
                    Team::A => policy(&arena, a.id, &mut rng),
                    Team::B => scripted_action(&arena, a.id, ep),
                };
            }
            let r = arena.step(&acts).unwrap();
            reward += r.reward;
            if r.done {
                match r.outcome {
                    Outcome::Win => wins += 1,
                    Outcome::Draw => draws += 1,
                    _ => {}
                }
                break;
            }
        }
    }
    let n = episodes as f64;
    println!(
        "{name:>9}: win {:.3} draw {:.3} mean reward {:.3}",
        wins as f64 / n,
        draws as f64 / n,
        reward / n
    );
}

fn random(arena: &Arena, id: usize, rng: &mut ChaCha8Rng) -> usize {
    let mask = arena.legal_actions(id).unwrap();
    let legal: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    legal[rng.gen_range(0..legal.len())]
}

fn toward(arena: &Arena, id: usize, tx: i32, ty: i32) -> usize {
    let a = &arena.state().agents[id];
    let mask = arena.legal_actions(id).unwrap();
    let (dx, dy) = (tx - a.x, ty - a.y);
    let xd = if dx > 0 { 1 } else { 3 };
    let yd = if dy > 0 { 0 } else { 2 };
    let order = if dx.abs() >= dy.abs() {
        [(xd, dx), (yd, dy)]
    } else {
        [(yd, dy), (xd, dx)]
    };
    for (d, g) in order {
        if g != 0 && mask[1 + d] {
            return 1 + d;
        }
    }
    0
}

/// Repair, else shoot the weakest target in range, else close in on the
/// nearest enemy this unit can hit. UAVs fight too.
fn charge(arena: &Arena, id: usize) -> usize {
    let k = arena.config().attack_slots;
    let st = arena.state();
    let me = &st.agents[id];
    let mask = arena.legal_actions(id).unwrap();
    if mask[Action::Repair.encode(k)] {
        return Action::Repair.encode(k);
    }
    let weakest = (0..k)
        .filter(|&s| mask[Action::Attack(s).encode(k)])
        .filter_map(|s| arena.attack_target(id, s).map(|t| (st.agents[t].hp, s)))
        .min();
    if let Some((_, s)) = weakest {
        return Action::Attack(s).encode(k);
    }
    match arena
        .attack_candidates(id)
        .into_iter()
        .map(|e| (chebyshev(me, &st.agents[e]), e))
        .min()
    {
        Some((_, e)) => toward(arena, id, st.agents[e].x, st.agents[e].y),
        None => 0,
    }
}

fn main() {
    let n = std::env::args().nth(1).map_or(500, |s| s.parse().unwrap());
    run("random", n, &random);
    run("scripted", n, &|arena, id, _| scripted_action(arena, id, 7));
    run("charge", n, &|arena, id, _| charge(arena, id));
}
