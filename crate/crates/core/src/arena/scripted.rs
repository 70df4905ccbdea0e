use super::env::{chebyshev, Action, Arena, Team};

fn mix(seed: u64, step: u32, id: usize) -> u64 {
    let mut z = seed ^ (step as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((id as u64) << 32);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Direction index that closes the larger axis gap toward `(tx, ty)`.
/// Equal gaps are split by a seeded coin.
fn step_toward(arena: &Arena, id: usize, tx: i32, ty: i32, coin: bool, mask: &[bool]) -> usize {
    let a = &arena.state().agents[id];
    let (dx, dy) = (tx - a.x, ty - a.y);
    if dx == 0 && dy == 0 {
        return Action::NoOp.encode(arena.config().attack_slots);
    }
    let xdir = if dx > 0 { 1 } else { 3 };
    let ydir = if dy > 0 { 0 } else { 2 };
    let x_first = dx.abs() > dy.abs() || (dx.abs() == dy.abs() && coin);
    let order: [(usize, i32); 2] = if x_first {
        [(xdir, dx), (ydir, dy)]
    } else {
        [(ydir, dy), (xdir, dx)]
    };
    for (dir, gap) in order {
        if gap != 0 && mask[1 + dir] {
            return Action::Move(dir).encode(arena.config().attack_slots);
        }
    }
    Action::NoOp.encode(arena.config().attack_slots)
}

/// Support units shadow the centroid of their living ground allies
/// (all allies when no ground unit is left).
fn follow_ground(arena: &Arena, id: usize, coin: bool, mask: &[bool]) -> usize {
    let state = arena.state();
    let cfg = arena.config();
    let me = &state.agents[id];
    let allies: Vec<_> = state
        .agents
        .iter()
        .filter(|a| a.alive && a.team == me.team && a.id != id)
        .collect();
    let ground: Vec<_> = allies
        .iter()
        .copied()
        .filter(|a| !cfg.roster[a.type_idx].is_air)
        .collect();
    let group = if ground.is_empty() { allies } else { ground };
    if group.is_empty() {
        return Action::NoOp.encode(cfg.attack_slots);
    }
    let n = group.len() as i32;
    let cx = (group.iter().map(|a| a.x).sum::<i32>() + n / 2).div_euclid(n);
    let cy = (group.iter().map(|a| a.y).sum::<i32>() + n / 2).div_euclid(n);
    step_toward(arena, id, cx, cy, coin, mask)
}

/// Action for one agent under the built-in rule set.
///
/// Support units repair the most damaged ally in range, otherwise follow
/// the ground units; they never attack. Other units attack the lowest-HP
/// legal target, otherwise advance toward the nearest visible enemy, or
/// toward the enemy side when none is visible.
pub fn scripted_action(arena: &Arena, id: usize, seed: u64) -> usize {
    let state = arena.state();
    let cfg = arena.config();
    let k = cfg.attack_slots;
    let me = &state.agents[id];
    let spec = &cfg.roster[me.type_idx];
    let mask = arena
        .legal_actions(id)
        .expect("scripted actions are only requested for living agents");
    let coin = mix(seed, state.step, id) & 1 == 1;

    if spec.is_support() {
        if mask[Action::Repair.encode(k)] {
            return Action::Repair.encode(k);
        }
        return follow_ground(arena, id, coin, &mask);
    }
    // lowest-HP legal target; equal HP keeps the nearer slot
    let best = (0..k)
        .filter(|&s| mask[5 + s])
        .filter_map(|s| arena.attack_target(id, s).map(|t| (state.agents[t].hp, s)))
        .min();
    if let Some((_, slot)) = best {
        return Action::Attack(slot).encode(k);
    }
    let nearest = state
        .agents
        .iter()
        .filter(|e| e.alive && e.team != me.team)
        .map(|e| (chebyshev(me, e), e.id))
        .filter(|&(d, _)| d <= cfg.vision_radius)
        .min();
    match nearest {
        Some((_, e)) => {
            let e = &state.agents[e];
            step_toward(arena, id, e.x, e.y, coin, &mask)
        }
        None => {
            let dir = Arena::forward_dir(me.team);
            if mask[1 + dir] {
                Action::Move(dir).encode(k)
            } else {
                Action::NoOp.encode(k)
            }
        }
    }
}

/// Fills `actions[id]` for every living agent of `team`.
pub fn scripted_opponent_into(arena: &Arena, team: Team, seed: u64, actions: &mut [usize]) {
    for a in arena.state().agents.iter().filter(|a| a.alive && a.team == team) {
        actions[a.id] = scripted_action(arena, a.id, seed);
    }
}

/// Joint actions `(agent id, action)` for the living agents of `team`.
pub fn scripted_opponent(arena: &Arena, team: Team, seed: u64) -> Vec<(usize, usize)> {
    arena
        .state()
        .agents
        .iter()
        .filter(|a| a.alive && a.team == team)
        .map(|a| (a.id, scripted_action(arena, a.id, seed)))
        .collect()
}
