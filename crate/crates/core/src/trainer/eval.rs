use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::arena::{ArenaConfig, Outcome};
use crate::policy::PolicyGroup;

use super::{derive_seed, play_episode, stream, Lineup, TrainError};

/// Plays `n` episodes; `make` picks the lineup (and any tag worth keeping)
/// for episode `i` from that episode's own random stream. Results come back
/// in episode order regardless of thread count.
pub fn play_many<'a, T, F>(
    cfg: &ArenaConfig,
    n: usize,
    seed: u64,
    make: F,
) -> Result<Vec<(Outcome, T)>, TrainError>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<(Lineup<'a>, T), TrainError> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let i64 = i as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream::ACT, i64]));
            let (lineup, tag) = make(i, &mut rng)?;
            let outcome = play_episode(
                cfg,
                &lineup,
                derive_seed(seed, &[stream::ENV, i64]),
                derive_seed(seed, &[stream::OPPONENT, i64]),
                &mut rng,
            )?;
            Ok((outcome, tag))
        })
        .collect()
}

/// Ω: fraction of `n` frontier-only episodes won against the scripted
/// opponent. Draws and losses both count as non-wins.
pub fn evaluate_frontier(
    frontier: &PolicyGroup,
    cfg: &ArenaConfig,
    n: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    if n == 0 {
        return Err(TrainError::Config("evaluation needs at least one episode".into()));
    }
    let eval_seed = derive_seed(seed, &[stream::EVAL]);
    let results = play_many(cfg, n, eval_seed, |_, _| Ok((Lineup::frontier(frontier), ())))?;
    let wins = results.iter().filter(|(o, _)| *o == Outcome::Win).count();
    Ok(wins as f64 / n as f64)
}
