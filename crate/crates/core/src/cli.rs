//! Command-line front end. `dispatch` maps argv to an exit code:
//! 0 success, 1 usage error, 2 runtime error, 3 corrupt artifact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    compat_exclusive, compat_inclusive, compat_file, compat_svg, export_compat, export_roles,
    read_compat_summary, read_roles_summary, role_matrix, roles_svg, wilson, AnalysisConfig,
    CompatMode, COMPAT_SUMMARY, ROLES_SUMMARY, Z95,
};
use crate::league::LeagueManifest;
use crate::trainer::{
    evaluate_frontier, latest_checkpoint, load_checkpoint, Checkpoint, TrainConfig, TrainError,
    Trainer, METRICS_FILE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_CORRUPT: i32 = 3;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const OUT_DIR_ENV: &str = "HLT_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "hlt", about = "Heterogeneous league training on a grid battle arena")]
struct Cli {
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a frontier policy group and its league.
    Train(TrainArgs),
    /// Estimate Ω of a checkpoint's frontier against the scripted opponent.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 160)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Frontier/past compatibility test over the league.
    Compat {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "exclusive")]
        mode: CompatMode,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Role matrix: each type forced onto each past group.
    Roles {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Print the league members of a run.
    League {
        #[arg(long)]
        run: PathBuf,
    },
    /// Regenerate SVG figures from a run's or an analysis directory's CSVs.
    Plot {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON config; missing keys take defaults, unknown keys are errors.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory (default: $HLT_OUT_DIR/run-<config hash>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of optimisation steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Continue from this checkpoint directory.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    #[arg(long, default_value_t = 160)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.90)]
    omega_max: f64,
    /// Output directory (default: $HLT_OUT_DIR/<run name>-analysis, or next to the run).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Written once per run directory; enough to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub seed: u64,
    /// Hash of the canonical config JSON, hashed like a git blob (SHA-256).
    pub config_hash: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub metrics: String,
    pub checkpoints: String,
    /// Checkpoints this run was resumed from, in order.
    pub resumed_from: Vec<String>,
}

/// `sha256("blob <len>\0" + canonical JSON)`.
pub fn config_hash(config: &TrainConfig) -> String {
    let body = serde_json::to_string(config).expect("config serialises");
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", body.len()).as_bytes());
    h.update(body.as_bytes());
    hex::encode(h.finalize())
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Train(TrainError),
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        Failure::Train(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Train(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Train(e.into())
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    EXIT_OK
                }
                _ => {
                    let _ = e.print();
                    EXIT_USAGE
                }
            };
        }
    };
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match run(cli.command, workers) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Train(e)) => {
            eprintln!("error: {e}");
            if e.is_corrupt() {
                EXIT_CORRUPT
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn run(cmd: Command, workers: usize) -> Result<(), Failure> {
    match cmd {
        Command::Train(a) => train(a, workers),
        Command::Eval {
            checkpoint,
            episodes,
            seed,
        } => eval(&checkpoint, episodes, seed, workers),
        Command::Compat { run, mode, analysis } => compat(&run, mode, &analysis, workers),
        Command::Roles { run, analysis } => roles(&run, &analysis, workers),
        Command::League { run } => league(&run),
        Command::Plot { run, out } => plot(&run, out),
    }
}

fn out_root() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Failure::Train(TrainError::Config(e.to_string())))
}

fn train(a: TrainArgs, workers: usize) -> Result<(), Failure> {
    let mut trainer = if let Some(ckpt) = &a.resume {
        if a.config.is_some() || a.seed.is_some() {
            return Err(Failure::Usage("--resume takes its config from the checkpoint".into()));
        }
        let mut t = Trainer::resume(ckpt, workers)?;
        if let Some(s) = a.steps {
            t.config.total_steps = s;
        }
        t
    } else {
        let mut config = match &a.config {
            Some(p) => TrainConfig::from_json(&fs::read_to_string(p)?)?,
            None => TrainConfig::default(),
        };
        if let Some(s) = a.seed {
            config.seed = s;
        }
        if let Some(s) = a.steps {
            config.total_steps = s;
        }
        config.validate()?;
        Trainer::new(config, workers)?
    };

    let out = match (&a.out, &a.resume) {
        (Some(o), _) => o.clone(),
        (None, Some(ckpt)) => ckpt
            .parent()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .ok_or_else(|| Failure::Usage("cannot infer the run directory; pass --out".into()))?,
        (None, None) => match out_root() {
            Some(root) => root.join(format!("run-{}", &config_hash(&trainer.config)[..12])),
            None => return Err(Failure::Usage(format!("pass --out or set {OUT_DIR_ENV}"))),
        },
    };
    let manifest_path = out.join(MANIFEST_FILE);
    let mut manifest = if let Some(ckpt) = &a.resume {
        let mut m: RunManifest = match fs::read_to_string(&manifest_path) {
            Ok(t) => serde_json::from_str(&t).map_err(|e| TrainError::Corrupt(format!("{MANIFEST_FILE}: {e}")))?,
            Err(_) => new_manifest(&trainer.config),
        };
        m.resumed_from.push(ckpt.display().to_string());
        m.finished_unix = None;
        m.config.total_steps = trainer.config.total_steps;
        m
    } else {
        if manifest_path.exists() {
            return Err(Failure::Train(TrainError::Config(format!(
                "{} already holds a run; use --resume or another --out",
                out.display()
            ))));
        }
        new_manifest(&trainer.config)
    };
    fs::create_dir_all(&out)?;
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;

    let stdout = std::io::stdout();
    trainer.run(&out, |row| {
        if let Some(w) = row.omega {
            let mut lock = stdout.lock();
            let _ = writeln!(
                lock,
                "step {:>4}  episodes {:>6}  omega {:.4}  league {}",
                row.step, row.episodes, w, row.league_size
            );
        }
    })?;
    manifest.finished_unix = Some(now_unix());
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!("run written to {}", out.display());
    Ok(())
}

fn new_manifest(config: &TrainConfig) -> RunManifest {
    RunManifest {
        config: config.clone(),
        seed: config.seed,
        config_hash: config_hash(config),
        started_unix: now_unix(),
        finished_unix: None,
        metrics: METRICS_FILE.into(),
        checkpoints: "checkpoints".into(),
        resumed_from: Vec::new(),
    }
}

/// Accepts a checkpoint directory or a run directory (uses its latest checkpoint).
fn resolve_checkpoint(path: &Path) -> Result<PathBuf, Failure> {
    if path.join("state.json").exists() {
        return Ok(path.to_path_buf());
    }
    if path.join("checkpoints").join("latest").exists() {
        return Ok(latest_checkpoint(path)?);
    }
    if !path.exists() {
        return Err(Failure::Train(TrainError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", path.display()),
        ))));
    }
    Err(Failure::Train(TrainError::Corrupt(format!(
        "{} is neither a checkpoint nor a run directory",
        path.display()
    ))))
}

fn load(path: &Path) -> Result<Checkpoint, Failure> {
    Ok(load_checkpoint(&resolve_checkpoint(path)?)?)
}

fn eval(path: &Path, episodes: usize, seed: u64, workers: usize) -> Result<(), Failure> {
    if episodes == 0 {
        return Err(Failure::Usage("--episodes must be positive".into()));
    }
    let ckpt = load(path)?;
    let w = pool(workers)?
        .install(|| evaluate_frontier(&ckpt.learner.frontier, &ckpt.config.arena, episodes, seed))?;
    let wins = (w * episodes as f64).round() as usize;
    let (lo, hi) = wilson(wins, episodes, Z95);
    println!("omega {w:.4}  ({wins}/{episodes} wins, 95% CI [{lo:.4}, {hi:.4}])");
    Ok(())
}

fn analysis_out(run: &Path, out: &Option<PathBuf>) -> PathBuf {
    if let Some(o) = out {
        return o.clone();
    }
    let name = run
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let dir = format!("{name}-analysis");
    match out_root() {
        Some(root) => root.join(dir),
        None => run.parent().unwrap_or(Path::new(".")).join(dir),
    }
}

fn analysis_config(a: &AnalysisArgs) -> Result<AnalysisConfig, Failure> {
    if a.episodes == 0 {
        return Err(Failure::Usage("--episodes must be positive".into()));
    }
    Ok(AnalysisConfig {
        seed: a.seed,
        episodes: a.episodes,
        omega_max: a.omega_max,
        self_mix: true,
    })
}

fn compat(run: &Path, mode: CompatMode, a: &AnalysisArgs, workers: usize) -> Result<(), Failure> {
    let cfg = analysis_config(a)?;
    let ckpt = load(run)?;
    let f = &ckpt.learner.frontier;
    let report = pool(workers)?.install(|| match mode {
        CompatMode::Exclusive => compat_exclusive(f, &ckpt.league, &ckpt.config.arena, &cfg),
        CompatMode::Inclusive => compat_inclusive(f, &ckpt.league, &ckpt.config.arena, &cfg),
    })?;
    println!("{:>8} {:>8} {:>8} {:>18} {:>12}", "version", "omega", "mixed", "95% CI", "improvement");
    for r in report.rows.iter().chain(&report.control) {
        println!(
            "{:>8} {:>8.4} {:>8.4}   [{:.3}, {:.3}] {:>+12.4}{}",
            r.version,
            r.omega,
            r.mixed.win_rate,
            r.mixed.ci_low,
            r.mixed.ci_high,
            r.improvement,
            if r.synthetic { "  (frontier copy)" } else { "" }
        );
    }
    let dir = analysis_out(run, &a.out);
    for p in export_compat(&report, &dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn roles(run: &Path, a: &AnalysisArgs, workers: usize) -> Result<(), Failure> {
    let cfg = analysis_config(a)?;
    let ckpt = load(run)?;
    let m = pool(workers)?
        .install(|| role_matrix(&ckpt.learner.frontier, &ckpt.league, &ckpt.config.arena, &cfg))?;
    println!("frontier omega {:.4}", m.frontier.win_rate);
    print!("{:>8} {:>8}", "version", "omega");
    for n in &m.type_names {
        print!(" {:>12}", format!("decline:{n}"));
    }
    println!();
    for r in m.rows.iter().chain(&m.control) {
        print!("{:>8} {:>8.4}", r.version, r.omega);
        for c in &r.cells {
            print!(" {:>+12.4}", c.decline);
        }
        println!("{}", if r.synthetic { "  (frontier copy)" } else { "" });
    }
    let dir = analysis_out(run, &a.out);
    for p in export_roles(&m, &dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn league(run: &Path) -> Result<(), Failure> {
    let ckpt = resolve_checkpoint(run)?;
    let path = ckpt.join("league.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| TrainError::Corrupt(format!("{}: {e}", path.display())))?;
    let m: LeagueManifest =
        serde_json::from_str(&text).map_err(|e| TrainError::Corrupt(format!("league.json: {e}")))?;
    if m.members.is_empty() {
        println!("league empty");
        return Ok(());
    }
    println!("{:>8} {:>8} {:>12}", "version", "omega", "admitted_at");
    for e in &m.members {
        println!("{:>8} {:>8.4} {:>12}", e.version, e.omega, e.admitted_at);
    }
    Ok(())
}

/// Ω curve from a metrics log.
fn omega_svg(metrics: &Path) -> Result<Option<String>, Failure> {
    let mut rd = csv::Reader::from_path(metrics).map_err(TrainError::from)?;
    let mut pts = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(TrainError::from)?;
        let (Some(step), Some(omega)) = (rec.get(0), rec.get(2)) else {
            return Err(Failure::Train(TrainError::Corrupt("short metrics row".into())));
        };
        if omega.is_empty() {
            continue;
        }
        let s: f64 = step.parse().map_err(|_| TrainError::Corrupt(format!("bad step {step:?}")))?;
        let w: f64 = omega.parse().map_err(|_| TrainError::Corrupt(format!("bad omega {omega:?}")))?;
        pts.push((s, w));
    }
    if pts.is_empty() {
        return Ok(None);
    }
    let max_step = pts.iter().map(|p| p.0).fold(1.0, f64::max);
    let (w, h, pad) = (480.0, 320.0, 48.0);
    let x = |s: f64| pad + s / max_step * (w - 2.0 * pad);
    let y = |v: f64| h - pad - v * (h - 2.0 * pad);
    let line: Vec<String> = pts.iter().map(|&(s, v)| format!("{},{}", x(s), y(v))).collect();
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11"><rect x="0" y="0" width="{w}" height="{h}" fill="white"/><text x="{}" y="20" text-anchor="middle" font-size="13">frontier Ω during training</text><rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w / 2.0,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    svg.push_str(&format!(
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        line.join(" ")
    ));
    svg.push_str(&format!(
        r#"<text x="{}" y="{}" text-anchor="middle">optimisation step (max {max_step})</text><text x="{}" y="{}" text-anchor="end">1.0</text><text x="{}" y="{}" text-anchor="end">0.0</text></svg>"#,
        w / 2.0,
        h - 8.0,
        pad - 4.0,
        y(1.0) + 4.0,
        pad - 4.0,
        y(0.0) + 4.0
    ));
    svg.push('\n');
    Ok(Some(svg))
}

fn plot(run: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    if !run.is_dir() {
        return Err(Failure::Train(TrainError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not a directory", run.display()),
        ))));
    }
    let is_run = run.join(METRICS_FILE).exists();
    let out = match out {
        Some(o) => o,
        None if is_run => analysis_out(run, &None),
        None => run.to_path_buf(),
    };
    fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    if is_run {
        if let Some(svg) = omega_svg(&run.join(METRICS_FILE))? {
            let p = out.join("omega.svg");
            fs::write(&p, svg)?;
            written.push(p);
        }
    }
    for mode in [CompatMode::Exclusive, CompatMode::Inclusive] {
        let p = run.join(compat_file(mode, COMPAT_SUMMARY));
        if p.exists() {
            let rows = read_compat_summary(&p)?;
            if !rows.is_empty() {
                let svg = out.join(format!("compat_{mode}.svg"));
                fs::write(&svg, compat_svg(mode, &rows))?;
                written.push(svg);
            }
        }
    }
    let p = run.join(ROLES_SUMMARY);
    if p.exists() {
        let rows = read_roles_summary(&p)?;
        if !rows.is_empty() {
            let mut names: Vec<(usize, String)> = rows.iter().map(|r| (r.type_idx, r.type_name.clone())).collect();
            names.sort();
            names.dedup();
            let names: Vec<String> = names.into_iter().map(|(_, n)| n).collect();
            let svg = out.join("roles.svg");
            fs::write(&svg, roles_svg(&names, &rows))?;
            written.push(svg);
        }
    }
    if written.is_empty() {
        println!("nothing to plot in {}", run.display());
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
