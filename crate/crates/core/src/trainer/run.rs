use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::league::{compose_mixed, sample_assignment, sample_combination, League};
use crate::policy::duplicate_and_freeze;

use super::{
    build_training_data, collect_episode, derive_seed, evaluate_frontier, load_checkpoint,
    save_checkpoint, stream, Checkpoint, Learner, Lineup, RolloutBatch, StepStats, TrainConfig,
    TrainError,
};

pub const METRICS_FILE: &str = "metrics.csv";

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub episodes: u64,
    /// Set only on evaluation steps.
    pub omega: Option<f64>,
    pub stats: StepStats,
    pub frontier_only_episodes: usize,
    pub league_size: usize,
    pub wall_ms: u64,
}

impl MetricsRow {
    pub fn header(type_names: &[String]) -> Vec<String> {
        let mut h = vec!["step".to_string(), "episodes".into(), "omega".into()];
        h.extend(type_names.iter().map(|n| format!("policy_loss_{n}")));
        h.extend(["value_loss", "entropy", "league_size", "wall_ms"].map(String::from));
        h
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.step.to_string(),
            self.episodes.to_string(),
            self.omega.map(|w| w.to_string()).unwrap_or_default(),
        ];
        r.extend(self.stats.policy_loss.iter().map(f64::to_string));
        r.push(self.stats.value_loss.to_string());
        r.push(self.stats.entropy.to_string());
        r.push(self.league_size.to_string());
        r.push(self.wall_ms.to_string());
        r
    }
}

/// Run state plus the worker pool. Every random draw is derived from
/// `(seed, step, episode)`, so the step counter is the only RNG state.
pub struct Trainer {
    pub config: TrainConfig,
    pub learner: Learner,
    pub league: League,
    pub step: usize,
    pub episodes: u64,
    /// `(step, Ω)` for every evaluation so far.
    pub omega_history: Vec<(usize, f64)>,
    pool: rayon::ThreadPool,
    started: Instant,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, TrainError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| TrainError::Config(format!("worker pool: {e}")))
}

impl Trainer {
    pub fn new(config: TrainConfig, workers: usize) -> Result<Self, TrainError> {
        let learner = Learner::new(&config)?;
        let league = League::new(config.league_capacity)?;
        Ok(Self {
            config,
            learner,
            league,
            step: 0,
            episodes: 0,
            omega_history: Vec::new(),
            pool: pool(workers)?,
            started: Instant::now(),
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint, workers: usize) -> Result<Self, TrainError> {
        Ok(Self {
            config: ckpt.config,
            learner: ckpt.learner,
            league: ckpt.league,
            step: ckpt.step,
            episodes: ckpt.episodes,
            omega_history: ckpt.omega_history,
            pool: pool(workers)?,
            started: Instant::now(),
        })
    }

    pub fn resume(dir: &Path, workers: usize) -> Result<Self, TrainError> {
        Self::from_checkpoint(load_checkpoint(dir)?, workers)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            learner: self.learner.clone(),
            league: self.league.clone(),
            step: self.step,
            episodes: self.episodes,
            omega_history: self.omega_history.clone(),
        }
    }

    pub fn type_names(&self) -> Vec<String> {
        self.config.arena.roster.iter().map(|t| t.name.clone()).collect()
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.total_steps
    }

    /// Collects the next step's episodes under freshly sampled mixed
    /// assignments.
    pub fn collect(&self) -> Result<RolloutBatch, TrainError> {
        let cfg = &self.config;
        let step = self.step as u64;
        let learner = &self.learner;
        let league = &self.league;
        let episodes = self.pool.install(|| {
            (0..cfg.episodes_per_step)
                .into_par_iter()
                .map(|e| {
                    let path = |tag: u64| derive_seed(cfg.seed, &[tag, step, e as u64]);
                    let mut rng = ChaCha8Rng::seed_from_u64(path(stream::ACT));
                    let comb = sample_combination(league.len(), &cfg.sampler, &mut rng)?;
                    let assignment = sample_assignment(comb, cfg.arena.num_types(), &mut rng)?;
                    let mixed = compose_mixed(&assignment, &learner.frontier, league)?;
                    let lineup = Lineup::from_mixed(&mixed)?;
                    collect_episode(
                        &cfg.arena,
                        &lineup,
                        assignment,
                        &learner.critic,
                        e,
                        path(stream::ENV),
                        path(stream::OPPONENT),
                        &mut rng,
                    )
                })
                .collect::<Result<Vec<_>, TrainError>>()
        })?;
        Ok(RolloutBatch { episodes })
    }

    /// One optimisation step, followed by evaluation and league admission
    /// when the step closes an evaluation interval.
    pub fn train_step(&mut self) -> Result<MetricsRow, TrainError> {
        let batch = self.collect()?;
        let data = build_training_data(&batch, &self.config)?;
        let cfg = self.config.clone();
        let step = self.step;
        let learner = &mut self.learner;
        let stats = self.pool.install(|| learner.update(&data, &cfg, step))?;
        self.step += 1;
        self.episodes += cfg.episodes_per_step as u64;

        let mut omega = None;
        if cfg.is_boundary(self.step) {
            let seed = derive_seed(cfg.seed, &[stream::EVAL, self.step as u64]);
            let frontier = &self.learner.frontier;
            let w = self
                .pool
                .install(|| evaluate_frontier(frontier, &cfg.arena, cfg.eval_episodes, seed))?;
            let candidate = duplicate_and_freeze(&mut self.learner.frontier, w)?;
            self.league.try_admit(candidate, w, self.step as u64)?;
            self.omega_history.push((self.step, w));
            omega = Some(w);
        }
        Ok(MetricsRow {
            step: self.step,
            episodes: self.episodes,
            omega,
            stats,
            frontier_only_episodes: batch.frontier_only_count(),
            league_size: self.league.len(),
            wall_ms: if cfg.log_wall_time {
                self.started.elapsed().as_millis() as u64
            } else {
                0
            },
        })
    }

    /// Trains to `total_steps`, appending to `out/metrics.csv` and writing a
    /// checkpoint at every evaluation boundary and at the end. On a resumed
    /// run, log lines past the checkpoint are dropped first so the log
    /// continues exactly where the checkpoint left off.
    pub fn run(&mut self, out: &Path, mut on_step: impl FnMut(&MetricsRow)) -> Result<(), TrainError> {
        fs::create_dir_all(out)?;
        let path = out.join(METRICS_FILE);
        let header = MetricsRow::header(&self.type_names());
        let mut kept: Vec<csv::StringRecord> = Vec::new();
        if self.step > 0 && path.exists() {
            let mut rd = csv::Reader::from_path(&path)?;
            for rec in rd.records() {
                let rec = rec?;
                let s: usize = rec
                    .get(0)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| TrainError::Corrupt(format!("bad step in {}", path.display())))?;
                if s <= self.step {
                    kept.push(rec);
                }
            }
        }
        let mut wr = csv::Writer::from_path(&path)?;
        wr.write_record(&header)?;
        for rec in &kept {
            wr.write_record(rec)?;
        }
        wr.flush()?;
        let mut saved = checkpoint_dir(out, self.step).exists();
        while !self.is_done() {
            let row = self.train_step()?;
            wr.write_record(row.record())?;
            wr.flush()?;
            on_step(&row);
            saved = false;
            if row.omega.is_some() {
                self.save_to(out)?;
                saved = true;
            }
        }
        if !saved {
            self.save_to(out)?;
        }
        Ok(())
    }

    /// Writes `out/checkpoints/step_NNNNNN` and points `latest` at it.
    pub fn save_to(&self, out: &Path) -> Result<PathBuf, TrainError> {
        let dir = checkpoint_dir(out, self.step);
        save_checkpoint(&self.checkpoint(), &dir)?;
        fs::write(out.join("checkpoints").join("latest"), dir_name(self.step) + "\n")?;
        Ok(dir)
    }
}

fn dir_name(step: usize) -> String {
    format!("step_{step:06}")
}

pub fn checkpoint_dir(out: &Path, step: usize) -> PathBuf {
    out.join("checkpoints").join(dir_name(step))
}

/// The checkpoint named by `out/checkpoints/latest`.
pub fn latest_checkpoint(out: &Path) -> Result<PathBuf, TrainError> {
    let root = out.join("checkpoints");
    let name = fs::read_to_string(root.join("latest"))?;
    Ok(root.join(name.trim()))
}
