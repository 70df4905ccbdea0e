use hlt::arena::{
    normalize_between, normalized_reward, read_replay, scripted_action, scripted_opponent_into, Action, Arena,
    ArenaConfig, ArenaError, ArenaState, Outcome, ReplayLine, ReplayWriter, Team,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// default roster ids: team A uav 0-1, missile 2-5, kinetic 6-9; team B adds 10
const UAV: usize = 0;
const MISSILE: usize = 2;
const KINETIC: usize = 6;
const B: usize = 10;
const NOOP: usize = 0;

/// Only the listed agents are alive, at the given cell and HP.
fn scene(placed: &[(usize, i32, i32, u32)]) -> Arena {
    let (arena, _) = Arena::reset(ArenaConfig::default(), 0).unwrap();
    let mut state: ArenaState = arena.state().clone();
    for a in &mut state.agents {
        a.alive = false;
        a.hp = 0;
    }
    for &(id, x, y, hp) in placed {
        let a = &mut state.agents[id];
        a.x = x;
        a.y = y;
        a.hp = hp;
        a.alive = true;
    }
    Arena::from_parts(ArenaConfig::default(), state).unwrap()
}

fn random_legal(arena: &Arena, rng: &mut impl Rng) -> Vec<usize> {
    arena
        .state()
        .agents
        .iter()
        .map(|a| {
            if !a.alive {
                return NOOP;
            }
            let mask = arena.legal_actions(a.id).unwrap();
            let legal: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
            legal[rng.gen_range(0..legal.len())]
        })
        .collect()
}

#[test]
fn default_roster_shape() {
    let cfg = ArenaConfig::default();
    assert_eq!(cfg.num_agents(), 20);
    assert_eq!(cfg.num_actions(), 9);
    assert_eq!(cfg.obs_dim(), 139);
    let (arena, obs) = Arena::reset(cfg.clone(), 3).unwrap();
    assert_eq!(obs.len(), 20);
    assert!(obs.iter().all(|o| o.len() == 139));
    for team in [Team::A, Team::B] {
        let mut counts = [0usize; 3];
        for a in arena.state().team(team) {
            counts[a.type_idx] += 1;
        }
        assert_eq!(counts, [2, 4, 4]);
    }
}

#[test]
fn reset_is_seeded() {
    let (a, oa) = Arena::reset(ArenaConfig::default(), 11).unwrap();
    let (b, ob) = Arena::reset(ArenaConfig::default(), 11).unwrap();
    let (c, _) = Arena::reset(ArenaConfig::default(), 12).unwrap();
    assert_eq!(a.state(), b.state());
    assert_eq!(oa, ob);
    assert_ne!(a.state(), c.state());
}

#[test]
fn spawn_is_mirrored() {
    let (arena, _) = Arena::reset(ArenaConfig::default(), 5).unwrap();
    let agents = &arena.state().agents;
    for i in 0..B {
        let (a, b) = (&agents[i], &agents[i + B]);
        assert_eq!(a.team, Team::A);
        assert_eq!(b.team, Team::B);
        assert_eq!(b.x, 9 - a.x);
        assert_eq!((b.y, b.hp, b.type_idx), (a.y, a.hp, a.type_idx));
        assert!(a.x < 2);
    }
}

#[test]
fn mirrored_observations_match() {
    // own block and slot contents are symmetric under the x mirror
    let (arena, _) = Arena::reset(ArenaConfig::default(), 9).unwrap();
    for i in 0..B {
        let (oa, ob) = (arena.observe(i), arena.observe(i + B));
        let own = 3 + 3;
        assert_eq!(oa[..own], ob[..own]);
    }
}

#[test]
fn all_noop_changes_nothing() {
    let (mut arena, _) = Arena::reset(ArenaConfig::default(), 1).unwrap();
    let before = arena.state().agents.clone();
    let r = arena.step(&[NOOP; 20]).unwrap();
    assert_eq!(arena.state().agents, before);
    assert_eq!(r.reward, 0.0);
    assert!(!r.done);
    assert_eq!(arena.state().step, 1);
}

#[test]
fn episode_ends_at_max_steps() {
    let (mut arena, _) = Arena::reset(ArenaConfig::default(), 1).unwrap();
    for t in 0..40 {
        let r = arena.step(&[NOOP; 20]).unwrap();
        assert_eq!(r.done, t == 39);
    }
    assert_eq!(arena.state().outcome, Outcome::Draw);
    assert!(matches!(arena.step(&[NOOP; 20]), Err(ArenaError::EpisodeOver)));
}

#[test]
fn kinetic_cannot_hit_air() {
    let mut arena = scene(&[(KINETIC, 4, 4, 10), (B + UAV, 5, 4, 8)]);
    let mask = arena.legal_actions(KINETIC).unwrap();
    assert!(mask[5..8].iter().all(|&m| !m));
    let mut acts = vec![NOOP; 20];
    acts[KINETIC] = Action::Attack(0).encode(3);
    match arena.step(&acts) {
        Err(ArenaError::IllegalAction { agent, reason, .. }) => {
            assert_eq!(agent, KINETIC);
            assert!(reason.contains("cannot target air"), "{reason}");
        }
        other => panic!("expected illegal action, got {other:?}"),
    }
}

#[test]
fn missile_can_hit_air() {
    let mut arena = scene(&[(MISSILE, 2, 4, 8), (B + UAV, 5, 4, 8)]);
    let mask = arena.legal_actions(MISSILE).unwrap();
    assert!(mask[5]);
    assert!(!mask[6]);
    let mut acts = vec![NOOP; 20];
    acts[MISSILE] = 5;
    let r = arena.step(&acts).unwrap();
    assert_eq!(arena.state().agents[B + UAV].hp, 7);
    assert!(r.reward > 0.0);
}

#[test]
fn out_of_range_attack_masked() {
    let arena = scene(&[(KINETIC, 0, 0, 10), (B + KINETIC, 5, 5, 10)]);
    assert!(!arena.legal_actions(KINETIC).unwrap()[5]);
    assert_eq!(arena.attack_candidates(KINETIC), vec![B + KINETIC]);
}

#[test]
fn corner_masks_off_grid_moves() {
    let arena = scene(&[(KINETIC, 0, 0, 10), (B + KINETIC, 9, 9, 10)]);
    let mask = arena.legal_actions(KINETIC).unwrap();
    // up, right, down, left
    assert_eq!(&mask[1..5], &[true, true, false, false]);
    let arena = scene(&[(KINETIC, 9, 9, 10), (B + KINETIC, 0, 0, 10)]);
    let mask = arena.legal_actions(KINETIC).unwrap();
    assert_eq!(&mask[1..5], &[false, false, true, true]);
}

#[test]
fn fast_unit_clamps_at_edge() {
    let mut arena = scene(&[(UAV, 8, 5, 8), (B + KINETIC, 0, 0, 10)]);
    let mut acts = vec![NOOP; 20];
    acts[UAV] = Action::Move(1).encode(3);
    arena.step(&acts).unwrap();
    assert_eq!(arena.state().agents[UAV].x, 9);
}

#[test]
fn repair_caps_at_max_hp() {
    let mut arena = scene(&[(UAV, 4, 4, 8), (KINETIC, 5, 4, 9), (B + KINETIC, 0, 9, 10)]);
    let repair = Action::Repair.encode(3);
    assert!(arena.legal_actions(UAV).unwrap()[repair]);
    let mut acts = vec![NOOP; 20];
    acts[UAV] = repair;
    arena.step(&acts).unwrap();
    assert_eq!(arena.state().agents[KINETIC].hp, 10);
    assert!(!arena.legal_actions(UAV).unwrap()[repair]);

    let mut arena = scene(&[(UAV, 4, 4, 8), (KINETIC, 5, 4, 5), (B + KINETIC, 0, 9, 10)]);
    arena.step(&acts).unwrap();
    assert_eq!(arena.state().agents[KINETIC].hp, 7);
}

#[test]
fn non_support_cannot_repair() {
    let arena = scene(&[(MISSILE, 4, 4, 8), (KINETIC, 5, 4, 5), (B + KINETIC, 0, 9, 10)]);
    assert!(!arena.legal_actions(MISSILE).unwrap()[Action::Repair.encode(3)]);
}

#[test]
fn dead_and_unknown_agents() {
    let arena = scene(&[(KINETIC, 0, 0, 10), (B + KINETIC, 9, 9, 10)]);
    assert!(matches!(arena.legal_actions(MISSILE), Err(ArenaError::DeadAgent(2))));
    assert!(matches!(arena.legal_actions(99), Err(ArenaError::UnknownAgent(99))));
}

#[test]
fn wrong_action_count_rejected() {
    let (mut arena, _) = Arena::reset(ArenaConfig::default(), 1).unwrap();
    assert!(matches!(arena.step(&[NOOP; 3]), Err(ArenaError::Config(_))));
}

#[test]
fn killing_last_enemy_wins() {
    let mut arena = scene(&[(KINETIC, 4, 4, 10), (B + KINETIC, 5, 4, 2)]);
    let mut acts = vec![NOOP; 20];
    acts[KINETIC] = 5;
    let r = arena.step(&acts).unwrap();
    assert!(r.done);
    assert_eq!(r.outcome, Outcome::Win);
    assert_eq!(arena.judge(Team::B), Outcome::Loss);
    assert!(r.observations[B + KINETIC].iter().all(|&v| v == 0.0));
}

#[test]
fn scripted_advances_when_blind() {
    let (arena, _) = Arena::reset(ArenaConfig::default(), 4).unwrap();
    // team B moves toward -x, i.e. direction 3
    for id in B + MISSILE..2 * B {
        assert_eq!(scripted_action(&arena, id, 0), Action::Move(3).encode(3));
    }
    for id in MISSILE..B {
        assert_eq!(scripted_action(&arena, id, 0), Action::Move(1).encode(3));
    }
}

#[test]
fn scripted_attacks_weakest() {
    // slot 0 is the nearer HP-7 kinetic, slot 1 the HP-3 missile
    let arena = scene(&[(B + MISSILE, 5, 5, 8), (KINETIC, 4, 5, 7), (MISSILE, 3, 5, 3)]);
    assert_eq!(arena.attack_candidates(B + MISSILE), vec![KINETIC, MISSILE]);
    assert_eq!(scripted_action(&arena, B + MISSILE, 0), Action::Attack(1).encode(3));
}

#[test]
fn scripted_support_follows_ground() {
    let arena = scene(&[
        (B + UAV, 9, 0, 8),
        (B + MISSILE, 9, 8, 8),
        (B + KINETIC, 9, 8, 10),
        (KINETIC, 0, 9, 10),
    ]);
    assert_eq!(scripted_action(&arena, B + UAV, 0), Action::Move(0).encode(3));
}

#[test]
fn scripted_support_repairs() {
    let arena = scene(&[(B + UAV, 9, 0, 8), (B + KINETIC, 9, 1, 4), (KINETIC, 0, 9, 10)]);
    assert_eq!(scripted_action(&arena, B + UAV, 0), Action::Repair.encode(3));
}

#[test]
fn normalized_reward_endpoints() {
    let cfg = ArenaConfig::default();
    let (min, max) = cfg.reward_bounds();
    assert_eq!(normalized_reward(min, &cfg).unwrap(), 0.0);
    assert_eq!(normalized_reward(max, &cfg).unwrap(), 1.0);
    assert!((normalized_reward((min + max) / 2.0, &cfg).unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(normalize_between(-5.0, 0.0, 1.0).unwrap(), 0.0);
    assert!(matches!(
        normalize_between(0.3, 1.0, 1.0),
        Err(ArenaError::DegenerateRange { .. })
    ));
    assert!(normalize_between(0.3, 2.0, 1.0).is_err());
}

#[test]
fn config_rejects_bad_values() {
    let mut cfg = ArenaConfig::default();
    cfg.roster[2].count = 30;
    assert!(matches!(Arena::reset(cfg, 0), Err(ArenaError::Config(_))));
    let mut cfg = ArenaConfig::default();
    cfg.gamma = 0.0;
    assert!(cfg.validate().is_err());
    let mut cfg = ArenaConfig::default();
    cfg.roster.clear();
    assert!(cfg.validate().is_err());
    let mut json = serde_json::to_value(ArenaConfig::default()).unwrap();
    json["colour"] = serde_json::json!(1);
    assert!(serde_json::from_value::<ArenaConfig>(json).is_err());
}

#[test]
fn replay_round_trip() {
    let (mut arena, _) = Arena::reset(ArenaConfig::default(), 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut wr = ReplayWriter::new(Vec::new());
    let mut lines = Vec::new();
    while !arena.state().outcome.is_terminal() {
        let hash = arena.state().hash_hex();
        let acts = random_legal(&arena, &mut rng);
        let r = arena.step(&acts).unwrap();
        let line = ReplayLine {
            step: arena.state().step - 1,
            state_hash: hash,
            actions: acts,
            reward: r.reward,
            outcome: r.outcome,
        };
        wr.write(&line).unwrap();
        lines.push(line);
    }
    let text = String::from_utf8(wr.into_inner()).unwrap();
    assert_eq!(read_replay(&text).unwrap(), lines);

    // replaying the logged actions reproduces every state hash
    let (mut again, _) = Arena::reset(ArenaConfig::default(), 21).unwrap();
    for l in &lines {
        assert_eq!(again.state().hash_hex(), l.state_hash);
        assert_eq!(again.step(&l.actions).unwrap().reward, l.reward);
    }
}

#[test]
fn random_policy_rarely_beats_script() {
    let cfg = ArenaConfig::default();
    let mut wins = 0;
    for ep in 0..1000u64 {
        let (mut arena, _) = Arena::reset(cfg.clone(), ep).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(ep ^ 0xabcd);
        while !arena.state().outcome.is_terminal() {
            let mut acts = random_legal(&arena, &mut rng);
            scripted_opponent_into(&arena, Team::B, ep, &mut acts);
            arena.step(&acts).unwrap();
        }
        wins += (arena.state().outcome == Outcome::Win) as usize;
    }
    assert!(wins < 200, "random policy won {wins}/1000");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn episode_invariants(seed in any::<u64>(), policy_seed in any::<u64>()) {
        let cfg = ArenaConfig::default();
        let (lo, hi) = cfg.reward_bounds();
        let (mut arena, _) = Arena::reset(cfg.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(policy_seed);
        let mut total = 0.0;
        let mut dead = [false; 20];
        while !arena.state().outcome.is_terminal() {
            let before_hp: [u32; 2] = [arena.state().team_hp(Team::A), arena.state().team_hp(Team::B)];
            let acts = random_legal(&arena, &mut rng);
            let r = arena.step(&acts).unwrap();
            prop_assert!(r.reward.is_finite());
            total += r.reward;
            let s = arena.state();
            for a in &s.agents {
                prop_assert!(a.hp <= cfg.roster[a.type_idx].max_hp);
                prop_assert_eq!(a.alive, a.hp > 0);
                prop_assert!(!(dead[a.id] && a.alive), "agent {} revived", a.id);
                prop_assert!((0..10).contains(&a.x) && (0..10).contains(&a.y));
                dead[a.id] = !a.alive;
            }
            // only team A can repair team A; B never gains HP without repair
            let after_hp = [s.team_hp(Team::A), s.team_hp(Team::B)];
            prop_assert!(after_hp[0] <= before_hp[0] + 4);
            prop_assert!(after_hp[1] <= before_hp[1] + 4);
            prop_assert!(s.step <= cfg.max_steps);
        }
        prop_assert!(total >= lo - 1e-9 && total <= hi + 1e-9);
        prop_assert_eq!(arena.judge(Team::A), arena.judge(Team::B).swap());
    }
}
