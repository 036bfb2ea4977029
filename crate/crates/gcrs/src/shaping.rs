//! Potential-based reward shaping and the training loop that ties the
//! planner to the policy.
//!
//! Each episode draws a task from the training distribution, generates a
//! world, and solves its abstract model from the reset image. Every step
//! then reads the plan at the agent's current image: the optimal value
//! becomes the shaping potential, and the state one macro ahead becomes the
//! subgoal the observation is conditioned on. Shaped rewards follow the
//! potential-difference form `r + gamma * phi(x') - phi(x)`, which leaves
//! optimal behavior unchanged and telescopes exactly over an episode (a
//! property test holds this to 1e-9).
//!
//! The driver steps a fixed roster of logical workers in order on one
//! thread, each with its own random stream, so a seed fully determines every
//! generated world, action, and metric. Plans are cached per episode and
//! merged on replanning; a mid-episode image the planner cannot route to a
//! goal ends the episode as failed-by-abstraction, while an unplannable
//! reset aborts the run.
//!
//! Four conditioning modes share this loop: full planner conditioning
//! (shaping and subgoals), shaping only, subgoals only, and a vanilla
//! baseline with no abstraction at all. The observation keeps a zeroed
//! subgoal block in the modes that withhold it, so network shapes match
//! across an ablation row.

use std::collections::VecDeque;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::abstraction::{AbstractModel, AbstractState, AbstractionKind, MacroAction};
use crate::learner::{
    encode_observation, gae, obs_len, Agent, LearnerError, PpoConfig, RolloutBatch, SubgoalView,
    UpdateStats,
};
use crate::planner::{phi_fail, PlanError, PlannerCache, DEFAULT_EXPANSION_CAP};
use crate::sim::{reset, step, SimState, Termination, ACTION_DIM};
use crate::world::{generate_world, splitmix64, TaskDescriptor, WorldError, WorldSpec};

/// What the planner contributes to a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub abstraction: Option<AbstractionKind>,
    pub shaping: bool,
    pub subgoal: bool,
}

impl Mode {
    pub fn gcrs(kind: AbstractionKind) -> Mode {
        Mode { abstraction: Some(kind), shaping: true, subgoal: true }
    }

    pub fn vanilla() -> Mode {
        Mode { abstraction: None, shaping: false, subgoal: false }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        match (self.abstraction, self.shaping, self.subgoal) {
            (None, false, false) => Ok(()),
            (None, _, _) => Err(TrainError::InvalidMode(
                "shaping and subgoal conditioning require an abstraction".into(),
            )),
            (Some(_), false, false) => Err(TrainError::InvalidMode(
                "an abstraction without shaping or subgoals is the vanilla baseline; drop it".into(),
            )),
            (Some(_), _, _) => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match (self.abstraction.is_some(), self.shaping, self.subgoal) {
            (false, _, _) => "vanilla",
            (true, true, true) => "gcrs",
            (true, true, false) => "plan-rs",
            (true, false, true) => "subgoal-only",
            (true, false, false) => "invalid",
        }
    }
}

/// The potential-difference reward. With shaping off the raw reward passes
/// through untouched.
pub fn shaped_reward(raw: f64, gamma: f64, potential: f64, next_potential: f64, shaping: bool) -> f64 {
    if shaping {
        raw + gamma * next_potential - potential
    } else {
        raw
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid mode: {0}")]
    InvalidMode(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("no abstract route to the goal at reset for {task}")]
    UnplannableReset { task: String },
    #[error(transparent)]
    Planner(PlanError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub mode: Mode,
    pub ppo: PpoConfig,
    pub workers: usize,
    /// Steps each worker contributes per optimization round.
    pub rollout_len: usize,
    pub total_env_steps: u64,
    pub seed: u64,
    /// Episode tasks are drawn uniformly from these templates; each reset
    /// redraws the world seed.
    pub train_tasks: Vec<TaskDescriptor>,
    pub planner_cap: usize,
}

impl TrainParams {
    pub fn new(mode: Mode, train_tasks: Vec<TaskDescriptor>, total_env_steps: u64, seed: u64) -> TrainParams {
        TrainParams {
            mode,
            ppo: PpoConfig::default(),
            workers: 8,
            rollout_len: 2048,
            total_env_steps,
            seed,
            train_tasks,
            planner_cap: DEFAULT_EXPANSION_CAP,
        }
    }
}

/// One environment step as seen by the shaping layer.
#[derive(Debug, Clone, Copy)]
pub struct TransitionRecord {
    pub worker: usize,
    /// Zero-based step index within the episode.
    pub t: u32,
    pub raw_reward: f64,
    pub shaped_reward: f64,
    pub potential_before: f64,
    pub potential_after: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub failed_by_abstraction: bool,
}

impl TransitionRecord {
    pub fn episode_ended(&self) -> bool {
        self.terminated || self.truncated || self.failed_by_abstraction
    }
}

/// One optimization round's worth of metrics. Episode statistics are rolling
/// means over the last hundred finished episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: u64,
    pub env_steps: u64,
    pub updates: u64,
    pub episodes: u64,
    pub success_rate: f64,
    pub return_raw: f64,
    pub return_shaped: f64,
    pub episode_len: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    pub planner_solves: u64,
    pub planner_hits: u64,
    pub failed_by_abstraction: u64,
    pub wall_clock_s: f64,
}

pub const METRICS_HEADER: &str = "round,env_steps,updates,episodes,success_rate,return_raw,return_shaped,episode_len,policy_loss,value_loss,entropy,clip_fraction,approx_kl,grad_norm,planner_solves,planner_hits,failed_by_abstraction,wall_clock_s";

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> std::io::Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.round,
            r.env_steps,
            r.updates,
            r.episodes,
            r.success_rate,
            r.return_raw,
            r.return_shaped,
            r.episode_len,
            r.policy_loss,
            r.value_loss,
            r.entropy,
            r.clip_fraction,
            r.approx_kl,
            r.grad_norm,
            r.planner_solves,
            r.planner_hits,
            r.failed_by_abstraction,
            r.wall_clock_s,
        ));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())
}

/// Optional observers. The transition hook sees every environment step in
/// worker order; the round hook sees each metrics row as it is produced; the
/// agent hook sees the freshly updated policy after every optimization round
/// (periodic evaluation plugs in here). None of them may touch the training
/// random streams.
#[derive(Default)]
pub struct TrainHooks<'a> {
    pub on_transition: Option<Box<dyn FnMut(&TransitionRecord) + 'a>>,
    pub on_round: Option<Box<dyn FnMut(&MetricsRow) + 'a>>,
    pub on_agent: Option<Box<dyn FnMut(&Agent, u64) + 'a>>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub rows: Vec<MetricsRow>,
    pub episodes: u64,
    pub planner_solves: u64,
    pub planner_hits: u64,
    pub failed_by_abstraction: u64,
}

struct Episode {
    spec: WorldSpec,
    sim: SimState,
    cache: PlannerCache,
    potential: f64,
    sub: Option<(MacroAction, AbstractState)>,
}

#[derive(Default)]
struct EpisodeAcc {
    raw: f64,
    shaped: f64,
    len: u32,
}

#[derive(Default)]
struct Segment {
    obs: Vec<Vec<f64>>,
    actions: Vec<[f64; ACTION_DIM]>,
    logp: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
}

impl Segment {
    fn clear(&mut self) {
        self.obs.clear();
        self.actions.clear();
        self.logp.clear();
        self.values.clear();
        self.rewards.clear();
    }
}

struct Worker {
    rng: ChaCha8Rng,
    ep: Episode,
    acc: EpisodeAcc,
    seg: Segment,
}

#[derive(Clone, Copy)]
struct EpisodeStat {
    success: bool,
    raw: f64,
    shaped: f64,
    len: u32,
}

struct Globals {
    episodes: u64,
    failed: u64,
    solves: u64,
    hits: u64,
    window: VecDeque<EpisodeStat>,
}

impl Globals {
    fn push_episode(&mut self, stat: EpisodeStat, failed: bool) {
        self.episodes += 1;
        if failed {
            self.failed += 1;
        }
        if self.window.len() == 100 {
            self.window.pop_front();
        }
        self.window.push_back(stat);
    }

    fn harvest(&mut self, cache: &PlannerCache) {
        self.solves += cache.solves as u64;
        self.hits += cache.hits as u64;
    }
}

fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ salt))
}

/// Reads the plan at a nonterminal image: its potential and the next
/// waypoint. `Ok(None)` means the planner proved no goal is reachable from
/// here, which the caller treats as failed-by-abstraction.
#[allow(clippy::type_complexity)]
fn replan(
    cache: &mut PlannerCache,
    model: &AbstractModel<'_>,
    state: &AbstractState,
) -> Result<Option<(f64, Option<(MacroAction, AbstractState)>)>, TrainError> {
    match cache.solution(model, state) {
        Ok(sol) => {
            let value = sol.value(state).expect("solution covers its query");
            if value.is_finite() {
                let sub = sol.action(state).zip(sol.subgoal(state));
                Ok(Some((sol.potential(state).expect("known state"), sub)))
            } else {
                Ok(None)
            }
        }
        Err(PlanError::NoPathToGoal) => Ok(None),
        Err(e) => Err(TrainError::Planner(e)),
    }
}

fn start_episode(
    rng: &mut ChaCha8Rng,
    mode: Mode,
    tasks: &[TaskDescriptor],
    planner_cap: usize,
) -> Result<Episode, TrainError> {
    let template = tasks[rng.random_range(0..tasks.len())];
    let task = TaskDescriptor { seed: rng.random(), ..template };
    let spec = generate_world(&task)?;
    let sim = reset(&spec);
    let mut cache = PlannerCache::with_cap(planner_cap);
    let (potential, sub) = match mode.abstraction {
        Some(kind) => {
            let model = AbstractModel::new(&spec, kind);
            let image = model.phi(&sim);
            match replan(&mut cache, &model, &image)? {
                Some(plan) => plan,
                None => {
                    return Err(TrainError::UnplannableReset { task: format!("{task:?}") });
                }
            }
        }
        None => (0.0, None),
    };
    Ok(Episode { spec, sim, cache, potential, sub })
}

/// What a finished step left behind.
struct StepEnd {
    stat: Option<EpisodeStat>,
    failed: bool,
}

#[allow(clippy::too_many_arguments)]
fn run_segment(
    worker_idx: usize,
    worker: &mut Worker,
    params: &TrainParams,
    agent: &Agent,
    batch: &mut RolloutBatch,
    globals: &mut Globals,
    hooks: &mut TrainHooks<'_>,
    needs_reset: &mut bool,
) -> Result<(), TrainError> {
    let mode = params.mode;
    let gamma = params.ppo.gamma;

    for _ in 0..params.rollout_len {
        if *needs_reset {
            globals.harvest(&worker.ep.cache);
            worker.ep = start_episode(&mut worker.rng, mode, &params.train_tasks, params.planner_cap)?;
            worker.acc = EpisodeAcc::default();
            *needs_reset = false;
        }

        let Worker { rng, ep, acc, seg } = worker;
        let Episode { spec, sim, cache, potential, sub } = ep;
        let model = mode.abstraction.map(|k| AbstractModel::new(&*spec, k));

        let view = if mode.subgoal {
            sub.as_ref().map(|(m, s)| SubgoalView { action: Some(*m), state: s })
        } else {
            None
        };
        let obs = encode_observation(spec, sim, mode.abstraction, view);
        let (action, logp, value) = agent.act(&obs, rng, true);
        let outcome = step(spec, sim, action);

        let (next_potential, next_sub, failed) = match sim.terminal {
            Some(Termination::Goal) => (0.0, None, false),
            Some(Termination::Lava) => (phi_fail(spec), None, false),
            Some(Termination::Timeout) | None => match &model {
                Some(model) => {
                    let image = model.phi(sim);
                    match replan(cache, model, &image)? {
                        Some((p, s)) => (p, s, false),
                        None => (phi_fail(spec), None, true),
                    }
                }
                None => (0.0, None, false),
            },
        };

        let reward = shaped_reward(outcome.reward, gamma, *potential, next_potential, mode.shaping);
        seg.obs.push(obs);
        seg.actions.push(action);
        seg.logp.push(logp);
        seg.values.push(value);
        seg.rewards.push(reward);

        acc.raw += outcome.reward;
        acc.shaped += reward;
        let t = acc.len;
        acc.len += 1;

        if let Some(cb) = hooks.on_transition.as_mut() {
            cb(&TransitionRecord {
                worker: worker_idx,
                t,
                raw_reward: outcome.reward,
                shaped_reward: reward,
                potential_before: *potential,
                potential_after: next_potential,
                terminated: outcome.terminated,
                truncated: outcome.truncated,
                failed_by_abstraction: failed,
            });
        }

        let ended = outcome.terminated || outcome.truncated || failed;
        let end = if ended {
            StepEnd {
                stat: Some(EpisodeStat {
                    success: sim.terminal == Some(Termination::Goal),
                    raw: acc.raw,
                    shaped: acc.shaped,
                    len: acc.len,
                }),
                failed,
            }
        } else {
            *potential = next_potential;
            *sub = next_sub.clone();
            StepEnd { stat: None, failed: false }
        };

        if let Some(stat) = end.stat {
            // Bootstrap only a clean timeout; goal, lava, and abstraction
            // failure all close the value recursion at zero.
            let bootstrap = if outcome.truncated && !end.failed {
                let view = if mode.subgoal {
                    next_sub.as_ref().map(|(m, s)| SubgoalView { action: Some(*m), state: s })
                } else {
                    None
                };
                let next_obs = encode_observation(spec, sim, mode.abstraction, view);
                agent.value_of(&next_obs)
            } else {
                0.0
            };
            flush_segment(seg, bootstrap, gamma, params.ppo.lam, batch);
            globals.push_episode(stat, end.failed);
            *needs_reset = true;
        }
    }

    if !*needs_reset && !worker.seg.obs.is_empty() {
        // Round boundary cut through a live episode: bootstrap its tail.
        let Worker { ep, seg, .. } = worker;
        let view = if mode.subgoal {
            ep.sub.as_ref().map(|(m, s)| SubgoalView { action: Some(*m), state: s })
        } else {
            None
        };
        let next_obs = encode_observation(&ep.spec, &ep.sim, mode.abstraction, view);
        let bootstrap = agent.value_of(&next_obs);
        flush_segment(seg, bootstrap, gamma, params.ppo.lam, batch);
    }
    Ok(())
}

fn flush_segment(seg: &mut Segment, bootstrap: f64, gamma: f64, lam: f64, batch: &mut RolloutBatch) {
    if seg.obs.is_empty() {
        return;
    }
    let (adv, ret) = gae(&seg.rewards, &seg.values, bootstrap, gamma, lam);
    for i in 0..seg.obs.len() {
        batch.push(
            std::mem::take(&mut seg.obs[i]),
            seg.actions[i],
            seg.logp[i],
            adv[i],
            ret[i],
        );
    }
    seg.clear();
}

pub fn run_training(
    params: &TrainParams,
    hooks: &mut TrainHooks<'_>,
) -> Result<TrainOutcome, TrainError> {
    params.mode.validate()?;
    if params.train_tasks.is_empty() {
        return Err(TrainError::InvalidMode("no training tasks given".into()));
    }
    if params.workers == 0 || params.rollout_len == 0 {
        return Err(TrainError::InvalidMode("workers and rollout_len must be positive".into()));
    }

    let started = Instant::now();
    let obs_dim = obs_len(params.mode.abstraction);
    let mut agent = Agent::new(obs_dim, params.ppo, &mut stream(params.seed, 0x0A6E17));
    let mut update_rng = stream(params.seed, 0x0BDA7E);

    let mut globals =
        Globals { episodes: 0, failed: 0, solves: 0, hits: 0, window: VecDeque::with_capacity(100) };
    let mut workers = Vec::with_capacity(params.workers);
    let mut resets = vec![false; params.workers];
    for w in 0..params.workers {
        let mut rng = stream(params.seed, 1000 + w as u64);
        let ep = start_episode(&mut rng, params.mode, &params.train_tasks, params.planner_cap)?;
        workers.push(Worker { rng, ep, acc: EpisodeAcc::default(), seg: Segment::default() });
    }

    let steps_per_round = (params.workers * params.rollout_len) as u64;
    let rounds = params.total_env_steps.div_ceil(steps_per_round).max(1);
    let mut rows = Vec::with_capacity(rounds as usize);
    let mut batch = RolloutBatch::default();

    for round in 0..rounds {
        batch.clear();
        for (w, worker) in workers.iter_mut().enumerate() {
            run_segment(
                w,
                worker,
                params,
                &agent,
                &mut batch,
                &mut globals,
                hooks,
                &mut resets[w],
            )?;
        }
        let stats: UpdateStats = agent.update(&batch, &mut update_rng)?;
        agent.env_steps += steps_per_round;
        agent.episodes = globals.episodes;

        let live_solves: u64 = workers.iter().map(|w| w.ep.cache.solves as u64).sum();
        let live_hits: u64 = workers.iter().map(|w| w.ep.cache.hits as u64).sum();
        let n = globals.window.len().max(1) as f64;
        let row = MetricsRow {
            round,
            env_steps: agent.env_steps,
            updates: agent.updates,
            episodes: globals.episodes,
            success_rate: globals.window.iter().filter(|s| s.success).count() as f64
                / globals.window.len().max(1) as f64,
            return_raw: globals.window.iter().map(|s| s.raw).sum::<f64>() / n,
            return_shaped: globals.window.iter().map(|s| s.shaped).sum::<f64>() / n,
            episode_len: globals.window.iter().map(|s| f64::from(s.len)).sum::<f64>() / n,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            approx_kl: stats.approx_kl,
            grad_norm: stats.grad_norm,
            planner_solves: globals.solves + live_solves,
            planner_hits: globals.hits + live_hits,
            failed_by_abstraction: globals.failed,
            wall_clock_s: started.elapsed().as_secs_f64(),
        };
        if let Some(cb) = hooks.on_round.as_mut() {
            cb(&row);
        }
        rows.push(row);
        if let Some(cb) = hooks.on_agent.as_mut() {
            cb(&agent, agent.env_steps);
        }
    }

    for worker in &workers {
        globals.harvest(&worker.ep.cache);
    }
    Ok(TrainOutcome {
        agent,
        rows,
        episodes: globals.episodes,
        planner_solves: globals.solves,
        planner_hits: globals.hits,
        failed_by_abstraction: globals.failed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub mode: Mode,
    pub tasks: Vec<TaskDescriptor>,
    pub episodes_per_task: u32,
    pub seed: u64,
    pub planner_cap: usize,
}

/// Aggregate outcome of evaluating one task template.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub task: TaskDescriptor,
    pub episodes: u32,
    pub success_rate: f64,
    pub return_raw: f64,
    pub episode_len: f64,
}

/// Runs the deterministic (mean-action) policy over fresh worlds from each
/// task template. The planner still conditions observations when the mode
/// asks for subgoals; rewards are never shaped here.
pub fn run_eval(agent: &Agent, params: &EvalParams) -> Result<Vec<EvalRow>, TrainError> {
    params.mode.validate()?;
    let mut rng = stream(params.seed, 0x00EEA1);
    let mut rows = Vec::with_capacity(params.tasks.len());
    for template in &params.tasks {
        let mut successes = 0u32;
        let mut raw_sum = 0.0;
        let mut len_sum = 0u64;
        for _ in 0..params.episodes_per_task {
            let mut ep = start_episode(
                &mut rng,
                params.mode,
                std::slice::from_ref(template),
                params.planner_cap,
            )?;
            loop {
                let Episode { spec, sim, cache, potential: _, sub } = &mut ep;
                let view = if params.mode.subgoal {
                    sub.as_ref().map(|(m, s)| SubgoalView { action: Some(*m), state: s })
                } else {
                    None
                };
                let obs = encode_observation(spec, sim, params.mode.abstraction, view);
                let (action, _, _) = agent.act(&obs, &mut rng, false);
                let outcome = step(spec, sim, action);
                raw_sum += outcome.reward;
                len_sum += 1;
                if outcome.terminated || outcome.truncated {
                    if sim.terminal == Some(Termination::Goal) {
                        successes += 1;
                    }
                    break;
                }
                if params.mode.subgoal {
                    let kind = params.mode.abstraction.expect("validated mode");
                    let model = AbstractModel::new(&*spec, kind);
                    let image = model.phi(sim);
                    match replan(cache, &model, &image)? {
                        Some((_, s)) => *sub = s,
                        None => break, // failed by abstraction: episode unsuccessful
                    }
                }
            }
        }
        let n = f64::from(params.episodes_per_task.max(1));
        rows.push(EvalRow {
            task: *template,
            episodes: params.episodes_per_task,
            success_rate: f64::from(successes) / n,
            return_raw: raw_sum / n,
            episode_len: len_sum as f64 / n,
        });
    }
    Ok(rows)
}
