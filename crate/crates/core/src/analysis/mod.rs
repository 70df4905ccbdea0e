//! Compatibility tests between the frontier and past groups, and the
//! role matrix showing which agent type suffers most from running an old
//! policy. Win rates carry 95% Wilson intervals.

mod export;
mod svg;

pub use export::{
    aggregate_compat, aggregate_roles, compat_file, export_compat, export_roles, read_compat_raw,
    read_compat_summary, read_roles_raw, read_roles_summary, CompatRawRow, CompatSummaryRow,
    RolesRawRow, RolesSummaryRow, COMPAT_RAW, COMPAT_SUMMARY, ROLES_RAW, ROLES_SUMMARY,
};
pub use svg::{compat_svg, roles_svg};

use serde::{Deserialize, Serialize};

use crate::arena::{ArenaConfig, Outcome};
use crate::league::League;
use crate::policy::PolicyGroup;
use crate::trainer::{derive_seed, evaluate_frontier, play_many, Lineup, TrainError};

use rand::Rng;

/// z for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `wins` successes out of `n`.
pub fn wilson(wins: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = wins as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompatMode {
    /// One random type runs the past group, the rest run the frontier.
    Exclusive,
    /// One random type runs the frontier, the rest run the past group.
    Inclusive,
}

impl std::fmt::Display for CompatMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CompatMode::Exclusive => "exclusive",
            CompatMode::Inclusive => "inclusive",
        })
    }
}

impl std::str::FromStr for CompatMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exclusive" => Ok(CompatMode::Exclusive),
            "inclusive" => Ok(CompatMode::Inclusive),
            _ => Err(format!("unknown mode {s:?} (expected exclusive or inclusive)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub seed: u64,
    /// Episodes per league member (compatibility) or per cell (role matrix).
    pub episodes: usize,
    /// Only members with ω below this are analysed.
    pub omega_max: f64,
    /// Add a control row built from a frozen copy of the frontier.
    pub self_mix: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 160,
            omega_max: 0.90,
            self_mix: true,
        }
    }
}

/// Win count over a set of episodes, with its interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinStats {
    pub episodes: usize,
    pub wins: usize,
    pub win_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl WinStats {
    pub fn new(wins: usize, episodes: usize) -> Self {
        let (ci_low, ci_high) = wilson(wins, episodes, Z95);
        Self {
            episodes,
            wins,
            win_rate: if episodes == 0 { 0.0 } else { wins as f64 / episodes as f64 },
            ci_low,
            ci_high,
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }
}

/// One analysed episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEpisode {
    pub version: u64,
    pub omega: f64,
    pub synthetic: bool,
    pub episode: usize,
    /// Exclusive: the past-run type. Inclusive: the frontier-run type.
    /// Role matrix: the forced type.
    pub type_idx: usize,
    pub win: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatRow {
    pub version: u64,
    pub omega: f64,
    /// True for the frozen-frontier control.
    pub synthetic: bool,
    pub mixed: WinStats,
    /// Mixed win rate minus ω.
    pub improvement: f64,
}

impl CompatRow {
    /// Improvement is significant when the whole interval lies above ω.
    pub fn significant(&self) -> bool {
        self.mixed.ci_low > self.omega
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatReport {
    pub mode: CompatMode,
    pub episodes_per_group: usize,
    /// League members with ω below the cut-off, ascending ω.
    pub rows: Vec<CompatRow>,
    pub control: Option<CompatRow>,
    pub raw: Vec<RawEpisode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleCell {
    pub stats: WinStats,
    /// Frontier Ω minus the cell's win rate.
    pub decline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleRow {
    pub version: u64,
    pub omega: f64,
    pub synthetic: bool,
    pub cells: Vec<RoleCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleMatrix {
    pub type_names: Vec<String>,
    pub frontier: WinStats,
    pub rows: Vec<RoleRow>,
    pub control: Option<RoleRow>,
    pub raw: Vec<RawEpisode>,
}

impl RoleMatrix {
    /// `(rows, types)`, control row excluded.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.type_names.len())
    }
}

mod tag {
    pub const COMPAT: u64 = 11;
    pub const ROLES: u64 = 12;
    pub const FRONTIER: u64 = 13;
}

fn filtered(league: &League, omega_max: f64) -> Result<Vec<(&PolicyGroup, f64)>, TrainError> {
    if league.is_empty() {
        return Err(TrainError::Config("league is empty".into()));
    }
    Ok(league
        .members()
        .iter()
        .filter(|m| m.omega < omega_max)
        .map(|m| (&m.group, m.omega))
        .collect())
}

fn frontier_stats(frontier: &PolicyGroup, arena: &ArenaConfig, cfg: &AnalysisConfig) -> Result<WinStats, TrainError> {
    let seed = derive_seed(cfg.seed, &[tag::FRONTIER]);
    let w = evaluate_frontier(frontier, arena, cfg.episodes, seed)?;
    Ok(WinStats::new((w * cfg.episodes as f64).round() as usize, cfg.episodes))
}

/// Episodes where `pick` chooses a type per episode and `past_types` maps
/// that choice to the set of past-run types.
fn mixed_episodes(
    frontier: &PolicyGroup,
    past: &PolicyGroup,
    arena: &ArenaConfig,
    n: usize,
    seed: u64,
    pick: impl Fn(&mut rand_chacha::ChaCha8Rng) -> usize + Sync,
    past_types: impl Fn(usize, usize) -> bool + Sync,
) -> Result<Vec<(bool, usize)>, TrainError> {
    let nt = frontier.num_types();
    let out = play_many(arena, n, seed, |_, rng| {
        let chosen = pick(rng);
        let flags: Vec<bool> = (0..nt).map(|t| past_types(chosen, t)).collect();
        let groups = flags.iter().map(|&p| if p { past } else { frontier }).collect();
        Ok((Lineup::new(groups, flags)?, chosen))
    })?;
    Ok(out.into_iter().map(|(o, t)| (o == Outcome::Win, t)).collect())
}

fn compat(
    mode: CompatMode,
    frontier: &PolicyGroup,
    league: &League,
    arena: &ArenaConfig,
    cfg: &AnalysisConfig,
) -> Result<CompatReport, TrainError> {
    let mut groups: Vec<(PolicyGroup, f64, bool)> = filtered(league, cfg.omega_max)?
        .into_iter()
        .map(|(g, w)| (g.clone(), w, false))
        .collect();
    if cfg.self_mix {
        let w = frontier_stats(frontier, arena, cfg)?.win_rate;
        groups.push((frontier.frozen_snapshot(w)?, w, true));
    }
    let nt = frontier.num_types();
    let seed = derive_seed(cfg.seed, &[tag::COMPAT]);
    let mut rows = Vec::new();
    let mut control = None;
    let mut raw = Vec::new();
    for (g, omega, synthetic) in &groups {
        let eps = mixed_episodes(
            frontier,
            g,
            arena,
            cfg.episodes,
            seed,
            |rng| rng.gen_range(0..nt),
            |chosen, t| match mode {
                CompatMode::Exclusive => t == chosen,
                CompatMode::Inclusive => t != chosen,
            },
        )?;
        let wins = eps.iter().filter(|(w, _)| *w).count();
        raw.extend(eps.iter().enumerate().map(|(i, &(win, t))| RawEpisode {
            version: g.version,
            omega: *omega,
            synthetic: *synthetic,
            episode: i,
            type_idx: t,
            win,
        }));
        let mixed = WinStats::new(wins, cfg.episodes);
        let row = CompatRow {
            version: g.version,
            omega: *omega,
            synthetic: *synthetic,
            improvement: mixed.win_rate - omega,
            mixed,
        };
        if *synthetic {
            control = Some(row);
        } else {
            rows.push(row);
        }
    }
    Ok(CompatReport {
        mode,
        episodes_per_group: cfg.episodes,
        rows,
        control,
        raw,
    })
}

/// Frontier-exclusive test: per episode a uniformly drawn type runs the
/// past group, every other type runs the frontier.
pub fn compat_exclusive(
    frontier: &PolicyGroup,
    league: &League,
    arena: &ArenaConfig,
    cfg: &AnalysisConfig,
) -> Result<CompatReport, TrainError> {
    compat(CompatMode::Exclusive, frontier, league, arena, cfg)
}

/// Frontier-inclusive test: per episode a uniformly drawn type runs the
/// frontier, every other type runs the past group.
pub fn compat_inclusive(
    frontier: &PolicyGroup,
    league: &League,
    arena: &ArenaConfig,
    cfg: &AnalysisConfig,
) -> Result<CompatReport, TrainError> {
    compat(CompatMode::Inclusive, frontier, league, arena, cfg)
}

/// For every filtered member and every type, that type is forced onto the
/// member's policy while the others run the frontier.
pub fn role_matrix(
    frontier: &PolicyGroup,
    league: &League,
    arena: &ArenaConfig,
    cfg: &AnalysisConfig,
) -> Result<RoleMatrix, TrainError> {
    let base = frontier_stats(frontier, arena, cfg)?;
    let mut groups: Vec<(PolicyGroup, f64, bool)> = filtered(league, cfg.omega_max)?
        .into_iter()
        .map(|(g, w)| (g.clone(), w, false))
        .collect();
    if cfg.self_mix {
        groups.push((frontier.frozen_snapshot(base.win_rate)?, base.win_rate, true));
    }
    let nt = frontier.num_types();
    let mut rows = Vec::new();
    let mut control = None;
    let mut raw = Vec::new();
    for (g, omega, synthetic) in &groups {
        let mut cells = Vec::with_capacity(nt);
        for forced in 0..nt {
            let seed = derive_seed(cfg.seed, &[tag::ROLES, forced as u64]);
            let eps = mixed_episodes(frontier, g, arena, cfg.episodes, seed, |_| forced, |c, t| t == c)?;
            let wins = eps.iter().filter(|(w, _)| *w).count();
            raw.extend(eps.iter().enumerate().map(|(i, &(win, t))| RawEpisode {
                version: g.version,
                omega: *omega,
                synthetic: *synthetic,
                episode: i,
                type_idx: t,
                win,
            }));
            let stats = WinStats::new(wins, cfg.episodes);
            cells.push(RoleCell {
                decline: base.win_rate - stats.win_rate,
                stats,
            });
        }
        let row = RoleRow {
            version: g.version,
            omega: *omega,
            synthetic: *synthetic,
            cells,
        };
        if *synthetic {
            control = Some(row);
        } else {
            rows.push(row);
        }
    }
    Ok(RoleMatrix {
        type_names: arena.roster.iter().map(|t| t.name.clone()).collect(),
        frontier: base,
        rows,
        control,
        raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_matches_reference() {
        // statsmodels proportion_confint(k, n, alpha=0.05, method="wilson")
        let cases = [
            (80, 160, 0.4234392476991226, 0.5765607523008773),
            (0, 10, 0.0, 0.27753279986288926),
            (157, 160, 0.9463298879006856, 0.9936031492467405),
            (1, 3, 0.06149194472039626, 0.7923403991979523),
        ];
        for (k, n, lo, hi) in cases {
            let (l, h) = wilson(k, n, Z95);
            assert!((l - lo).abs() < 1e-9 && (h - hi).abs() < 1e-9, "{k}/{n}: {l} {h}");
        }
        assert_eq!(wilson(0, 0, Z95), (0.0, 1.0));
    }

    #[test]
    fn mode_parses() {
        assert_eq!("inclusive".parse::<CompatMode>().unwrap(), CompatMode::Inclusive);
        assert!("both".parse::<CompatMode>().is_err());
    }
}
