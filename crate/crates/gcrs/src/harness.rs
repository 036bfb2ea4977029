//! Experiment configuration, run orchestration, and the plumbing behind the
//! `gcrs` command line: seeded multi-run training with periodic evaluation,
//! checkpoint evaluation sweeps, cross-seed aggregation, map generation, and
//! plan inspection.
//!
//! A run is described by a TOML file (see [`ExperimentConfig`]) and unfolds
//! under one output root as `seed_<s>/{metrics.csv, eval.csv, final.ckpt}`
//! plus a `manifest.json` recording the config digest, commit, and wall
//! clock. Every byte except wall-clock fields is determined by the config
//! and seed. The `GCRS_OUT` environment variable overrides the output root.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::abstraction::{AbstractModel, AbstractionKind};
use crate::learner::{Agent, LearnerError, PpoConfig};
use crate::planner::{debug_report, solve, PlanError, DEFAULT_EXPANSION_CAP};
use crate::shaping::{
    run_eval, run_training, write_metrics_csv, EvalParams, Mode, TrainError, TrainHooks,
    TrainParams,
};
use crate::sim::reset;
use crate::world::{
    generate_task, parse_map, render_map, splitmix64, training_and_eval_distributions, Color,
    Shape, TaskDescriptor, TaskFamily, WorldError,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] LearnerError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

impl HarnessError {
    /// Process exit code for this failure: 3 when the planner found no route
    /// to a goal, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Train(TrainError::UnplannableReset { .. }) => 3,
            HarnessError::Plan(PlanError::NoPathToGoal) => 3,
            HarnessError::World(WorldError::Unsolvable) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: String,
    task: RawTask,
    mode: RawMode,
    train: RawTrain,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    suite: Option<String>,
    family: Option<String>,
    difficulty: Option<u32>,
    arena_scale: Option<u32>,
    target_shape: Option<String>,
    target_color: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    abstraction: String,
    shaping: bool,
    subgoal_conditioning: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    n_env_steps: u64,
    seeds: Vec<u64>,
    /// Environment steps between evaluation passes; 0 evaluates only at the
    /// end of training.
    eval_every: Option<u64>,
    eval_episodes: Option<u32>,
    workers: Option<usize>,
    rollout_len: Option<usize>,
    planner_cap: Option<usize>,
    gamma: Option<f64>,
    lam: Option<f64>,
    clip: Option<f64>,
    lr: Option<f64>,
    value_coef: Option<f64>,
    entropy_coef: Option<f64>,
    grad_clip: Option<f64>,
    rpo_alpha: Option<f64>,
    epochs: Option<u32>,
    minibatches: Option<u32>,
    hidden: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

/// A validated experiment: resolved task distributions, mode, defaults
/// filled in, and the SHA-256 digest of the config text it came from.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: Mode,
    pub train_tasks: Vec<TaskDescriptor>,
    pub eval_tasks: Vec<TaskDescriptor>,
    pub ppo: PpoConfig,
    pub workers: usize,
    pub rollout_len: usize,
    pub planner_cap: usize,
    pub n_env_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: u32,
    pub seeds: Vec<u64>,
    pub out_root: PathBuf,
    pub digest: [u8; 32],
}

fn parse_abstraction(s: &str) -> Result<Option<AbstractionKind>, HarnessError> {
    match s {
        "none" => Ok(None),
        "room+pos" => Ok(Some(AbstractionKind::RoomPos)),
        other => AbstractionKind::from_str(other)
            .map(Some)
            .map_err(|e| HarnessError::Config(e.to_string())),
    }
}

fn parse_shape(s: &str) -> Result<Shape, HarnessError> {
    [Shape::Ball, Shape::Box]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| HarnessError::Config(format!("unknown shape {s:?} (ball|box)")))
}

fn parse_color(s: &str) -> Result<Color, HarnessError> {
    Color::ALL
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| HarnessError::Config(format!("unknown color {s:?}")))
}

fn check_difficulty(family: TaskFamily, difficulty: u32) -> Result<(), HarnessError> {
    let (lo, hi) = family.difficulty_range();
    if difficulty < lo || difficulty > hi {
        return Err(HarnessError::Config(format!(
            "difficulty {difficulty} out of range {lo}..{hi} for {family}"
        )));
    }
    Ok(())
}

#[allow(clippy::type_complexity)]
fn resolve_tasks(raw: &RawTask) -> Result<(Vec<TaskDescriptor>, Vec<TaskDescriptor>), HarnessError> {
    match (&raw.suite, &raw.family) {
        (Some(_), Some(_)) => {
            Err(HarnessError::Config("give either task.suite or task.family, not both".into()))
        }
        (None, None) => Err(HarnessError::Config("task needs a suite or a family".into())),
        (Some(suite), None) => {
            if raw.difficulty.is_some() || raw.target_shape.is_some() || raw.arena_scale.is_some() {
                return Err(HarnessError::Config(
                    "suite tasks fix their own difficulty and targets".into(),
                ));
            }
            training_and_eval_distributions(suite).map_err(HarnessError::World)
        }
        (None, Some(family)) => {
            let family =
                TaskFamily::from_str(family).map_err(|e| HarnessError::Config(e.to_string()))?;
            let difficulty = raw.difficulty.ok_or_else(|| {
                HarnessError::Config("task.family needs task.difficulty".into())
            })?;
            check_difficulty(family, difficulty)?;
            let target = match (&raw.target_shape, &raw.target_color) {
                (Some(s), Some(c)) => Some((parse_shape(s)?, parse_color(c)?)),
                (None, None) => None,
                _ => {
                    return Err(HarnessError::Config(
                        "target_shape and target_color go together".into(),
                    ));
                }
            };
            if target.is_some() && family != TaskFamily::ObjectDelivery {
                return Err(HarnessError::Config(format!(
                    "target objects only apply to object-delivery, not {family}"
                )));
            }
            let task = TaskDescriptor {
                target_object: target,
                arena_scale: raw.arena_scale,
                ..TaskDescriptor::new(family, difficulty, 0)
            };
            Ok((vec![task], vec![task]))
        }
    }
}

fn resolve_out_root(env_out: Option<&str>, cfg_dir: Option<&str>, name: &str) -> PathBuf {
    match (env_out, cfg_dir) {
        (Some(root), _) => Path::new(root).join(name),
        (None, Some(dir)) => PathBuf::from(dir),
        (None, None) => Path::new("out").join(name),
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let env_out = std::env::var("GCRS_OUT").ok();
        ExperimentConfig::from_str(&text, env_out.as_deref())
    }

    /// Parses and validates config text. `env_out`, when set, replaces the
    /// configured output root (it mirrors the `GCRS_OUT` variable).
    pub fn from_str(text: &str, env_out: Option<&str>) -> Result<ExperimentConfig, HarnessError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let digest: [u8; 32] = Sha256::digest(text.as_bytes()).into();

        if raw.name.is_empty() || raw.name.contains(['/', '\\']) {
            return Err(HarnessError::Config(format!(
                "run name {:?} must be a non-empty plain directory name",
                raw.name
            )));
        }
        let abstraction = parse_abstraction(&raw.mode.abstraction)?;
        let mode = Mode {
            abstraction,
            shaping: raw.mode.shaping,
            subgoal: raw.mode.subgoal_conditioning,
        };
        mode.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let (train_tasks, eval_tasks) = resolve_tasks(&raw.task)?;

        let t = &raw.train;
        if t.n_env_steps == 0 {
            return Err(HarnessError::Config("n_env_steps must be positive".into()));
        }
        if t.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must not be empty".into()));
        }
        let mut sorted = t.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != t.seeds.len() {
            return Err(HarnessError::Config("seeds must be distinct".into()));
        }
        let eval_episodes = t.eval_episodes.unwrap_or(100);
        if eval_episodes == 0 {
            return Err(HarnessError::Config("eval_episodes must be positive".into()));
        }
        let workers = t.workers.unwrap_or(8);
        let rollout_len = t.rollout_len.unwrap_or(2048);
        if workers == 0 || rollout_len == 0 {
            return Err(HarnessError::Config("workers and rollout_len must be positive".into()));
        }

        let d = PpoConfig::default();
        let ppo = PpoConfig {
            gamma: t.gamma.unwrap_or(d.gamma),
            lam: t.lam.unwrap_or(d.lam),
            clip: t.clip.unwrap_or(d.clip),
            lr: t.lr.unwrap_or(d.lr),
            value_coef: t.value_coef.unwrap_or(d.value_coef),
            entropy_coef: t.entropy_coef.unwrap_or(d.entropy_coef),
            grad_clip: t.grad_clip.unwrap_or(d.grad_clip),
            rpo_alpha: t.rpo_alpha.unwrap_or(d.rpo_alpha),
            epochs: t.epochs.unwrap_or(d.epochs),
            minibatches: t.minibatches.unwrap_or(d.minibatches),
            hidden: t.hidden.unwrap_or(d.hidden),
        };
        if !(ppo.gamma > 0.0 && ppo.gamma <= 1.0) {
            return Err(HarnessError::Config("gamma must lie in (0, 1]".into()));
        }
        if ppo.lr <= 0.0 || ppo.epochs == 0 || ppo.minibatches == 0 || ppo.hidden == 0 {
            return Err(HarnessError::Config(
                "lr, epochs, minibatches, and hidden must be positive".into(),
            ));
        }

        let cfg_dir = raw.output.as_ref().and_then(|o| o.dir.as_deref());
        let out_root = resolve_out_root(env_out, cfg_dir, &raw.name);

        Ok(ExperimentConfig {
            name: raw.name,
            mode,
            train_tasks,
            eval_tasks,
            ppo,
            workers,
            rollout_len,
            planner_cap: t.planner_cap.unwrap_or(DEFAULT_EXPANSION_CAP),
            n_env_steps: t.n_env_steps,
            eval_every: t.eval_every.unwrap_or(0),
            eval_episodes,
            seeds: t.seeds.clone(),
            out_root,
            digest,
        })
    }
}

/// One row of an evaluation report, as written to `eval.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReportRow {
    pub global_step: u64,
    pub dist: String,
    pub success_rate: f64,
    pub mean_episode_len: f64,
    pub n_episodes: u32,
    pub seed: u64,
}

pub const EVAL_REPORT_HEADER: &str =
    "global_step,dist,success_rate,mean_episode_len,n_episodes,seed";

pub fn eval_report_csv(rows: &[EvalReportRow]) -> String {
    let mut out = String::from(EVAL_REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.global_step, r.dist, r.success_rate, r.mean_episode_len, r.n_episodes, r.seed
        );
    }
    out
}

fn evaluate_agent(
    agent: &Agent,
    cfg: &ExperimentConfig,
    seed: u64,
    global_step: u64,
) -> Result<Vec<EvalReportRow>, TrainError> {
    let params = EvalParams {
        mode: cfg.mode,
        tasks: cfg.eval_tasks.clone(),
        episodes_per_task: cfg.eval_episodes,
        seed: splitmix64(splitmix64(seed) ^ global_step),
        planner_cap: cfg.planner_cap,
    };
    let rows = run_eval(agent, &params)?;
    Ok(rows
        .into_iter()
        .map(|r| EvalReportRow {
            global_step,
            dist: r.task.dist_id(),
            success_rate: r.success_rate,
            mean_episode_len: r.episode_len,
            n_episodes: r.episodes,
            seed,
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct SeedRunSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub episodes: u64,
    /// Mean success rate over the final evaluation's distributions.
    pub final_success: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub runs: Vec<SeedRunSummary>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn commit_id() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Trains every configured seed in order, writing per-seed metrics,
/// evaluation reports, and final checkpoints, then a run manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    let started = Instant::now();
    std::fs::create_dir_all(&cfg.out_root)?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    let mut manifest_runs = Vec::with_capacity(cfg.seeds.len());

    for &seed in &cfg.seeds {
        let dir = cfg.out_root.join(format!("seed_{seed}"));
        std::fs::create_dir_all(&dir)?;
        let params = TrainParams {
            mode: cfg.mode,
            ppo: cfg.ppo,
            workers: cfg.workers,
            rollout_len: cfg.rollout_len,
            total_env_steps: cfg.n_env_steps,
            seed,
            train_tasks: cfg.train_tasks.clone(),
            planner_cap: cfg.planner_cap,
        };

        let mut eval_rows: Vec<EvalReportRow> = Vec::new();
        let mut eval_err: Option<TrainError> = None;
        let mut next_eval = if cfg.eval_every == 0 { u64::MAX } else { cfg.eval_every };
        let outcome = {
            let mut hooks = TrainHooks {
                on_agent: Some(Box::new(|agent: &Agent, steps: u64| {
                    if eval_err.is_some() {
                        return;
                    }
                    while steps >= next_eval {
                        match evaluate_agent(agent, cfg, seed, steps) {
                            Ok(mut rows) => eval_rows.append(&mut rows),
                            Err(e) => {
                                eval_err = Some(e);
                                return;
                            }
                        }
                        next_eval = next_eval.saturating_add(cfg.eval_every);
                    }
                })),
                ..TrainHooks::default()
            };
            run_training(&params, &mut hooks)?
        };
        if let Some(e) = eval_err {
            return Err(e.into());
        }

        let final_step = outcome.agent.env_steps;
        if eval_rows.last().map(|r| r.global_step) != Some(final_step) {
            eval_rows.extend(evaluate_agent(&outcome.agent, cfg, seed, final_step)?);
        }
        let final_success = {
            let tail: Vec<&EvalReportRow> =
                eval_rows.iter().filter(|r| r.global_step == final_step).collect();
            tail.iter().map(|r| r.success_rate).sum::<f64>() / tail.len().max(1) as f64
        };

        write_metrics_csv(&dir.join("metrics.csv"), &outcome.rows)?;
        std::fs::write(dir.join("eval.csv"), eval_report_csv(&eval_rows))?;
        outcome.agent.save(
            &dir.join("final.ckpt"),
            cfg.digest,
            cfg.mode.abstraction,
            cfg.mode.shaping,
            cfg.mode.subgoal,
        )?;

        manifest_runs.push(serde_json::json!({
            "seed": seed,
            "episodes": outcome.episodes,
            "final_success": final_success,
            "planner_solves": outcome.planner_solves,
            "planner_hits": outcome.planner_hits,
            "failed_by_abstraction": outcome.failed_by_abstraction,
        }));
        runs.push(SeedRunSummary { seed, dir, episodes: outcome.episodes, final_success });
    }

    let manifest = serde_json::json!({
        "name": cfg.name,
        "mode": cfg.mode.label(),
        "abstraction": cfg.mode.abstraction.map(|k| k.name()).unwrap_or("none"),
        "config_digest": hex(&cfg.digest),
        "commit": commit_id(),
        "n_env_steps": cfg.n_env_steps,
        "eval_every": cfg.eval_every,
        "eval_episodes": cfg.eval_episodes,
        "seeds": cfg.seeds,
        "train_tasks": cfg.train_tasks.iter().map(|t| t.dist_id()).collect::<Vec<_>>(),
        "eval_tasks": cfg.eval_tasks.iter().map(|t| t.dist_id()).collect::<Vec<_>>(),
        "wall_clock_s": started.elapsed().as_secs_f64(),
        "runs": manifest_runs,
    });
    let manifest_path = cfg.out_root.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;

    Ok(RunSummary { root: cfg.out_root.clone(), manifest: manifest_path, runs })
}

/// What `gcrs eval` evaluates a checkpoint against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalTarget {
    /// A named suite's held-out evaluation distribution.
    Suite(String),
    /// A family swept over an inclusive difficulty range.
    Family { family: TaskFamily, difficulty: (u32, u32) },
}

/// Inclusive difficulty range: either a single number or `a..b`.
pub fn parse_difficulty_range(s: &str) -> Result<(u32, u32), HarnessError> {
    let bad = || HarnessError::Config(format!("difficulty {s:?} is not a number or a..b range"));
    if let Some((a, b)) = s.split_once("..") {
        let lo: u32 = a.trim().parse().map_err(|_| bad())?;
        let hi: u32 = b.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(HarnessError::Config(format!("empty difficulty range {s:?}")));
        }
        Ok((lo, hi))
    } else {
        let d: u32 = s.trim().parse().map_err(|_| bad())?;
        Ok((d, d))
    }
}

/// Loads a checkpoint and evaluates it with the conditioning mode it was
/// trained with. Reported `global_step` is the checkpoint's training step.
pub fn evaluate_checkpoint(
    ckpt: &Path,
    target: &EvalTarget,
    episodes: u32,
    seed: u64,
) -> Result<Vec<EvalReportRow>, HarnessError> {
    if episodes == 0 {
        return Err(HarnessError::Config("episodes must be positive".into()));
    }
    let (agent, info) = Agent::load(ckpt)?;
    let mode = Mode { abstraction: info.kind, shaping: info.shaping, subgoal: info.subgoal };
    let tasks = match target {
        EvalTarget::Suite(name) => training_and_eval_distributions(name)?.1,
        EvalTarget::Family { family, difficulty: (lo, hi) } => {
            check_difficulty(*family, *lo)?;
            check_difficulty(*family, *hi)?;
            (*lo..=*hi).map(|d| TaskDescriptor::new(*family, d, 0)).collect()
        }
    };
    let params = EvalParams {
        mode,
        tasks,
        episodes_per_task: episodes,
        seed,
        planner_cap: DEFAULT_EXPANSION_CAP,
    };
    let rows = run_eval(&agent, &params)?;
    Ok(rows
        .into_iter()
        .map(|r| EvalReportRow {
            global_step: info.env_steps,
            dist: r.task.dist_id(),
            success_rate: r.success_rate,
            mean_episode_len: r.episode_len,
            n_episodes: r.episodes,
            seed,
        })
        .collect())
}

pub const AGGREGATE_HEADER: &str = "env_steps,success_rate_mean,success_rate_std,return_raw_mean,return_raw_std,episode_len_mean,episode_len_std";

struct MetricsSeries {
    steps: Vec<u64>,
    success: Vec<f64>,
    raw: Vec<f64>,
    len: Vec<f64>,
}

fn read_metrics_series(path: &Path) -> Result<MetricsSeries, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Config(format!("{} is empty", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let col = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| HarnessError::Config(format!("{} lacks column {name}", path.display())))
    };
    let (i_step, i_succ, i_raw, i_len) =
        (col("env_steps")?, col("success_rate")?, col("return_raw")?, col("episode_len")?);
    let mut series =
        MetricsSeries { steps: Vec::new(), success: Vec::new(), raw: Vec::new(), len: Vec::new() };
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| {
            fields.get(i).copied().ok_or_else(|| {
                HarnessError::Config(format!("{}: short row {line:?}", path.display()))
            })
        };
        let parse_f = |s: &str| {
            s.parse::<f64>().map_err(|_| {
                HarnessError::Config(format!("{}: bad number {s:?}", path.display()))
            })
        };
        series.steps.push(get(i_step)?.parse::<u64>().map_err(|_| {
            HarnessError::Config(format!("{}: bad step in {line:?}", path.display()))
        })?);
        series.success.push(parse_f(get(i_succ)?)?);
        series.raw.push(parse_f(get(i_raw)?)?);
        series.len.push(parse_f(get(i_len)?)?);
    }
    if series.steps.is_empty() {
        return Err(HarnessError::Config(format!("{} has no data rows", path.display())));
    }
    Ok(series)
}

fn nearest_index(steps: &[u64], target: u64) -> usize {
    let mut best = 0;
    let mut best_gap = u64::MAX;
    for (i, &s) in steps.iter().enumerate() {
        let gap = s.abs_diff(target);
        if gap < best_gap {
            best_gap = gap;
            best = i;
        }
    }
    best
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates `seed_*/metrics.csv` under a run directory into
/// `aggregate.csv`: per-step mean and population standard deviation across
/// seeds, aligned to the coarsest seed's step grid by nearest step.
pub fn plot_data(run_dir: &Path) -> Result<PathBuf, HarnessError> {
    let mut metric_files: Vec<PathBuf> = Vec::new();
    for entry in std::fs::read_dir(run_dir)? {
        let path = entry?.path();
        let is_seed_dir = path.is_dir()
            && path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("seed_"));
        if is_seed_dir {
            let m = path.join("metrics.csv");
            if m.is_file() {
                metric_files.push(m);
            }
        }
    }
    metric_files.sort();
    if metric_files.is_empty() {
        return Err(HarnessError::Config(format!(
            "no seed_*/metrics.csv under {}",
            run_dir.display()
        )));
    }
    let series: Vec<MetricsSeries> =
        metric_files.iter().map(|p| read_metrics_series(p)).collect::<Result<_, _>>()?;

    let grid = series
        .iter()
        .min_by_key(|s| s.steps.len())
        .map(|s| s.steps.clone())
        .expect("non-empty series list");

    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for &step in &grid {
        let mut succ = Vec::with_capacity(series.len());
        let mut raw = Vec::with_capacity(series.len());
        let mut len = Vec::with_capacity(series.len());
        for s in &series {
            let i = nearest_index(&s.steps, step);
            succ.push(s.success[i]);
            raw.push(s.raw[i]);
            len.push(s.len[i]);
        }
        let (sm, sd) = mean_std(&succ);
        let (rm, rd) = mean_std(&raw);
        let (lm, ld) = mean_std(&len);
        let _ = writeln!(out, "{step},{sm},{sd},{rm},{rd},{lm},{ld}");
    }
    let path = run_dir.join("aggregate.csv");
    std::fs::write(&path, out)?;
    Ok(path)
}

/// Renders a map file's world and the abstract plan each abstraction finds
/// from the reset state.
pub fn plan_debug_report(map_path: &Path) -> Result<String, HarnessError> {
    let text = std::fs::read_to_string(map_path)?;
    let spec = parse_map(&text)?;
    let start = reset(&spec);
    let mut out = String::new();
    let _ = writeln!(out, "{}", render_map(&spec)?.trim_end());
    let _ = writeln!(
        out,
        "\ntask: {}  arena {}x{}  episode limit {}",
        spec.task.dist_id(),
        spec.width,
        spec.height,
        spec.task.episode_limit()
    );
    let mut kinds = vec![AbstractionKind::Grid, AbstractionKind::Room];
    if spec.task.family == TaskFamily::ObjectDelivery {
        kinds.push(AbstractionKind::RoomPos);
    }
    for kind in kinds {
        let model = AbstractModel::new(&spec, kind);
        let origin = model.phi(&start);
        let solution = solve(&model, &origin)?;
        let _ = writeln!(out, "\n== {} abstraction ==", kind.name());
        out.push_str(&debug_report(&model, &solution));
    }
    Ok(out)
}

/// Generates a world for the family/difficulty/seed triple and renders it in
/// the map text format (round-trips through the map parser).
pub fn generate_map_text(family: &str, difficulty: u32, seed: u64) -> Result<String, HarnessError> {
    let family = TaskFamily::from_str(family).map_err(|e| HarnessError::Config(e.to_string()))?;
    check_difficulty(family, difficulty)?;
    let spec = generate_task(family, difficulty, seed)?;
    Ok(render_map(&spec)?)
}

fn fail(err: &HarnessError) -> i32 {
    eprintln!("error: {err}");
    err.exit_code()
}

pub fn cli_train(config: &Path) -> i32 {
    let cfg = match ExperimentConfig::from_path(config) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e),
    };
    match run_experiment(&cfg) {
        Ok(summary) => {
            for run in &summary.runs {
                println!(
                    "seed {}: {} episodes, final success {:.3} -> {}",
                    run.seed,
                    run.episodes,
                    run.final_success,
                    run.dir.display()
                );
            }
            println!("manifest: {}", summary.manifest.display());
            0
        }
        Err(e) => fail(&e),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cli_eval(
    ckpt: &Path,
    suite: Option<String>,
    family: Option<String>,
    difficulty: Option<String>,
    episodes: u32,
    seed: u64,
) -> i32 {
    let target = match (suite, family) {
        (Some(name), None) => {
            if difficulty.is_some() {
                return fail(&HarnessError::Config(
                    "--difficulty applies to --family, not --suite".into(),
                ));
            }
            EvalTarget::Suite(name)
        }
        (None, Some(f)) => {
            let family = match TaskFamily::from_str(&f) {
                Ok(v) => v,
                Err(e) => return fail(&HarnessError::Config(e.to_string())),
            };
            let range = match difficulty.as_deref().map(parse_difficulty_range) {
                Some(Ok(r)) => r,
                Some(Err(e)) => return fail(&e),
                None => {
                    return fail(&HarnessError::Config(
                        "--family needs --difficulty <d|a..b>".into(),
                    ));
                }
            };
            EvalTarget::Family { family, difficulty: range }
        }
        _ => {
            return fail(&HarnessError::Config(
                "give exactly one of --suite or --family".into(),
            ));
        }
    };
    match evaluate_checkpoint(ckpt, &target, episodes, seed) {
        Ok(rows) => {
            print!("{}", eval_report_csv(&rows));
            0
        }
        Err(e) => fail(&e),
    }
}

pub fn cli_plan_debug(map: &Path) -> i32 {
    match plan_debug_report(map) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => fail(&e),
    }
}

pub fn cli_gen_map(family: &str, difficulty: u32, seed: u64) -> i32 {
    match generate_map_text(family, difficulty, seed) {
        Ok(map) => {
            print!("{map}");
            0
        }
        Err(e) => fail(&e),
    }
}

pub fn cli_plot_data(dir: &Path) -> i32 {
    match plot_data(dir) {
        Ok(path) => {
            println!("{}", path.display());
            0
        }
        Err(e) => fail(&e),
    }
}

pub fn cli_describe_checkpoint(path: &Path) -> i32 {
    match crate::learner::describe_checkpoint(path) {
        Ok(info) => {
            println!("{info}");
            0
        }
        Err(e) => fail(&HarnessError::Checkpoint(e)),
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> HarnessError {
        HarnessError::Config(format!("manifest: {e}"))
    }
}
