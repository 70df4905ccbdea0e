//! CSV schemas (one header line, comma separated):
//!
//! - `compat_<mode>_raw.csv`: mode, version, omega, synthetic, episode, type_idx, win
//! - `compat_<mode>_summary.csv`: mode, version, omega, synthetic, episodes, wins,
//!   win_rate, ci_low, ci_high, improvement, significant
//! - `roles_raw.csv`: version, omega, synthetic, type_idx, episode, win
//! - `roles_summary.csv`: version, omega, synthetic, type_idx, type_name, episodes,
//!   wins, win_rate, ci_low, ci_high, frontier_omega, decline

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{compat_svg, roles_svg, CompatMode, CompatReport, RoleMatrix, WinStats};
use crate::trainer::TrainError;

pub const COMPAT_RAW: &str = "raw.csv";
pub const COMPAT_SUMMARY: &str = "summary.csv";
pub const ROLES_RAW: &str = "roles_raw.csv";
pub const ROLES_SUMMARY: &str = "roles_summary.csv";

pub fn compat_file(mode: CompatMode, suffix: &str) -> String {
    format!("compat_{mode}_{suffix}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatRawRow {
    pub mode: CompatMode,
    pub version: u64,
    pub omega: f64,
    pub synthetic: bool,
    pub episode: usize,
    pub type_idx: usize,
    pub win: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatSummaryRow {
    pub mode: CompatMode,
    pub version: u64,
    pub omega: f64,
    pub synthetic: bool,
    pub episodes: usize,
    pub wins: usize,
    pub win_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub improvement: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolesRawRow {
    pub version: u64,
    pub omega: f64,
    pub synthetic: bool,
    pub type_idx: usize,
    pub episode: usize,
    pub win: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolesSummaryRow {
    pub version: u64,
    pub omega: f64,
    pub synthetic: bool,
    pub type_idx: usize,
    pub type_name: String,
    pub episodes: usize,
    pub wins: usize,
    pub win_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub frontier_omega: f64,
    pub decline: f64,
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), TrainError> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    wr.write_record(header)?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, TrainError> {
    let mut rd = csv::Reader::from_path(path)?;
    Ok(rd.deserialize().collect::<Result<Vec<T>, _>>()?)
}

const COMPAT_RAW_HEADER: [&str; 7] = ["mode", "version", "omega", "synthetic", "episode", "type_idx", "win"];
const COMPAT_SUMMARY_HEADER: [&str; 11] = [
    "mode",
    "version",
    "omega",
    "synthetic",
    "episodes",
    "wins",
    "win_rate",
    "ci_low",
    "ci_high",
    "improvement",
    "significant",
];
const ROLES_RAW_HEADER: [&str; 6] = ["version", "omega", "synthetic", "type_idx", "episode", "win"];
const ROLES_SUMMARY_HEADER: [&str; 12] = [
    "version",
    "omega",
    "synthetic",
    "type_idx",
    "type_name",
    "episodes",
    "wins",
    "win_rate",
    "ci_low",
    "ci_high",
    "frontier_omega",
    "decline",
];

/// Groups raw rows by `(version, synthetic)` in first-seen order.
fn groups<R>(raw: &[R], key: impl Fn(&R) -> (u64, bool, usize)) -> Vec<((u64, bool, usize), Vec<&R>)> {
    let mut out: Vec<((u64, bool, usize), Vec<&R>)> = Vec::new();
    for r in raw {
        let k = key(r);
        match out.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(r),
            None => out.push((k, vec![r])),
        }
    }
    out
}

/// Rebuilds the summary from raw outcomes.
pub fn aggregate_compat(raw: &[CompatRawRow]) -> Vec<CompatSummaryRow> {
    groups(raw, |r| (r.version, r.synthetic, 0))
        .into_iter()
        .map(|(_, rows)| {
            let first = rows[0];
            let wins = rows.iter().filter(|r| r.win == 1).count();
            let s = WinStats::new(wins, rows.len());
            CompatSummaryRow {
                mode: first.mode,
                version: first.version,
                omega: first.omega,
                synthetic: first.synthetic,
                episodes: s.episodes,
                wins,
                win_rate: s.win_rate,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                improvement: s.win_rate - first.omega,
                significant: s.ci_low > first.omega,
            }
        })
        .collect()
}

pub fn aggregate_roles(raw: &[RolesRawRow], type_names: &[String], frontier_omega: f64) -> Vec<RolesSummaryRow> {
    groups(raw, |r| (r.version, r.synthetic, r.type_idx))
        .into_iter()
        .map(|(_, rows)| {
            let first = rows[0];
            let wins = rows.iter().filter(|r| r.win == 1).count();
            let s = WinStats::new(wins, rows.len());
            RolesSummaryRow {
                version: first.version,
                omega: first.omega,
                synthetic: first.synthetic,
                type_idx: first.type_idx,
                type_name: type_names.get(first.type_idx).cloned().unwrap_or_default(),
                episodes: s.episodes,
                wins,
                win_rate: s.win_rate,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                frontier_omega,
                decline: frontier_omega - s.win_rate,
            }
        })
        .collect()
}

fn compat_raw_rows(r: &CompatReport) -> Vec<CompatRawRow> {
    r.raw
        .iter()
        .map(|e| CompatRawRow {
            mode: r.mode,
            version: e.version,
            omega: e.omega,
            synthetic: e.synthetic,
            episode: e.episode,
            type_idx: e.type_idx,
            win: e.win as u8,
        })
        .collect()
}

/// Writes raw and summary CSVs, plus an SVG when there is at least one row.
/// Returns the paths written.
pub fn export_compat(report: &CompatReport, dir: &Path) -> Result<Vec<PathBuf>, TrainError> {
    fs::create_dir_all(dir)?;
    let raw = compat_raw_rows(report);
    let summary = aggregate_compat(&raw);
    let raw_path = dir.join(compat_file(report.mode, COMPAT_RAW));
    let sum_path = dir.join(compat_file(report.mode, COMPAT_SUMMARY));
    write_csv(&raw_path, &COMPAT_RAW_HEADER, &raw)?;
    write_csv(&sum_path, &COMPAT_SUMMARY_HEADER, &summary)?;
    let mut out = vec![raw_path, sum_path];
    if !summary.is_empty() {
        let svg = dir.join(format!("compat_{}.svg", report.mode));
        fs::write(&svg, compat_svg(report.mode, &summary))?;
        out.push(svg);
    }
    Ok(out)
}

pub fn export_roles(matrix: &RoleMatrix, dir: &Path) -> Result<Vec<PathBuf>, TrainError> {
    fs::create_dir_all(dir)?;
    let raw: Vec<RolesRawRow> = matrix
        .raw
        .iter()
        .map(|e| RolesRawRow {
            version: e.version,
            omega: e.omega,
            synthetic: e.synthetic,
            type_idx: e.type_idx,
            episode: e.episode,
            win: e.win as u8,
        })
        .collect();
    let summary = aggregate_roles(&raw, &matrix.type_names, matrix.frontier.win_rate);
    let raw_path = dir.join(ROLES_RAW);
    let sum_path = dir.join(ROLES_SUMMARY);
    write_csv(&raw_path, &ROLES_RAW_HEADER, &raw)?;
    write_csv(&sum_path, &ROLES_SUMMARY_HEADER, &summary)?;
    let mut out = vec![raw_path, sum_path];
    if !summary.is_empty() {
        let svg = dir.join("roles.svg");
        fs::write(&svg, roles_svg(&matrix.type_names, &summary))?;
        out.push(svg);
    }
    Ok(out)
}

pub fn read_compat_raw(path: &Path) -> Result<Vec<CompatRawRow>, TrainError> {
    read_csv(path)
}

pub fn read_compat_summary(path: &Path) -> Result<Vec<CompatSummaryRow>, TrainError> {
    read_csv(path)
}

pub fn read_roles_raw(path: &Path) -> Result<Vec<RolesRawRow>, TrainError> {
    read_csv(path)
}

pub fn read_roles_summary(path: &Path) -> Result<Vec<RolesSummaryRow>, TrainError> {
    read_csv(path)
}
