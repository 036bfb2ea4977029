//! The goal-conditioned control policy and its optimizer.
//!
//! Everything numerical here is written by hand on `f64` slices: two-hidden-
//! layer tanh networks with explicit reverse-mode gradients, a clipped
//! surrogate policy update with generalized advantage estimation, Adam, and
//! global gradient-norm clipping. The actor mean can be perturbed with
//! uniform noise of half-width [`PpoConfig::rpo_alpha`] both when acting and
//! when recomputing log-probabilities during updates (fresh noise per
//! minibatch pass), which smooths the policy's effective action
//! distribution; at `rpo_alpha = 0` the update is exactly the plain clipped
//! surrogate method and consumes no extra randomness.
//!
//! Observations have a fixed layout independent of arena size (absolute
//! positions are normalized by the arena extent): agent kinematics, three
//! object slots, two door slots, two key slots, a subgoal block whose shape
//! depends on the abstraction family, and a task descriptor block. Waypoint
//! and drop-target cells appear as agent-relative offsets in cell units so
//! that steering toward them is a near-linear function of the block. Absent
//! entities encode as zeroed slots, and runs without planner conditioning
//! zero the subgoal block without changing its width.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::abstraction::{AbstractState, AbstractionKind, ItemId, MacroAction, NearTarget};
use crate::sim::{ItemRef, SimState, ACTION_DIM};
use crate::world::{Shape, TaskFamily, WorldSpec};

pub const MAX_OBJECT_SLOTS: usize = 3;
pub const MAX_DOOR_SLOTS: usize = 2;
pub const MAX_KEY_SLOTS: usize = 2;

const LN_2PI: f64 = 1.8378770664093453;
const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

const CHECKPOINT_MAGIC: &[u8; 4] = b"GCRS";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub lr: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub grad_clip: f64,
    /// Half-width of the uniform mean perturbation. Zero disables it.
    pub rpo_alpha: f64,
    pub epochs: u32,
    pub minibatches: u32,
    pub hidden: usize,
}

impl Default for PpoConfig {
    fn default() -> PpoConfig {
        PpoConfig {
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            lr: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.0,
            grad_clip: 0.5,
            rpo_alpha: 0.5,
            epochs: 4,
            minibatches: 8,
            hidden: 64,
        }
    }
}

/// Width of the subgoal block for an abstraction choice. Runs without an
/// abstraction keep the grid-sized block (zeroed) so observation length does
/// not depend on whether planning is enabled.
pub fn subgoal_block_len(kind: Option<AbstractionKind>) -> usize {
    match kind {
        None | Some(AbstractionKind::Grid) => 9,
        Some(AbstractionKind::Room) => 15,
        Some(AbstractionKind::RoomPos) => 17,
    }
}

pub fn obs_len(kind: Option<AbstractionKind>) -> usize {
    // agent 4, objects 3x7, doors 2x5, keys 2x5, task 13
    4 + MAX_OBJECT_SLOTS * 7 + MAX_DOOR_SLOTS * 5 + MAX_KEY_SLOTS * 5 + 13
        + subgoal_block_len(kind)
}

/// The planner's current waypoint: the macro chosen at the agent's abstract
/// state and the state that macro leads to.
#[derive(Debug, Clone, Copy)]
pub struct SubgoalView<'a> {
    pub action: Option<MacroAction>,
    pub state: &'a AbstractState,
}

fn macro_slot(action: MacroAction) -> usize {
    match action {
        MacroAction::MoveTo(_) | MacroAction::MoveNear(_) => 0,
        MacroAction::PickUp(_) => 1,
        MacroAction::Drop => 2,
        MacroAction::Unlock(_) => 3,
        MacroAction::Open(_) => 4,
        MacroAction::GoThroughDoor(_) => 5,
    }
}

fn item_ordinal(id: ItemId) -> f64 {
    let raw = match id {
        ItemId::Key(c) => 1 + c.ordinal(),
        ItemId::Object(s, c) => 5 + s.ordinal() * 4 + c.ordinal(),
    };
    raw as f64 / 12.0
}

fn item_hint(spec: &WorldSpec, action: Option<MacroAction>) -> f64 {
    match action {
        Some(MacroAction::PickUp(id)) | Some(MacroAction::MoveNear(NearTarget::Item(id))) => {
            item_ordinal(id)
        }
        Some(MacroAction::Unlock(cell)) => spec
            .door_index(cell)
            .map_or(0.0, |i| item_ordinal(ItemId::Key(spec.doors[i].color))),
        _ => 0.0,
    }
}

fn near_slot(spec: &WorldSpec, target: NearTarget) -> Option<usize> {
    match target {
        NearTarget::Goal => Some(0),
        NearTarget::Door(cell) => spec.door_index(cell).filter(|i| *i < MAX_DOOR_SLOTS).map(|i| 1 + i),
        NearTarget::Item(ItemId::Key(c)) => spec
            .keys
            .iter()
            .position(|k| k.color == c)
            .filter(|i| *i < MAX_KEY_SLOTS)
            .map(|i| 3 + i),
        NearTarget::Item(ItemId::Object(s, c)) => spec
            .objects
            .iter()
            .position(|o| o.shape == s && o.color == c)
            .filter(|i| *i < MAX_OBJECT_SLOTS)
            .map(|i| 5 + i),
    }
}

fn push_macro_block(o: &mut Vec<f64>, action: Option<MacroAction>) {
    let slot = action.map(macro_slot);
    for i in 0..6 {
        o.push(if slot == Some(i) { 1.0 } else { 0.0 });
    }
}

pub fn encode_observation(
    spec: &WorldSpec,
    sim: &SimState,
    kind: Option<AbstractionKind>,
    subgoal: Option<SubgoalView<'_>>,
) -> Vec<f64> {
    let mut o = Vec::with_capacity(obs_len(kind));
    let ex = spec.width as f64 * spec.cell_size;
    let ey = spec.height as f64 * spec.cell_size;

    o.push(sim.agent_pos[0] / ex);
    o.push(sim.agent_pos[1] / ey);
    o.push(sim.agent_vel[0] / 10.0);
    o.push(sim.agent_vel[1] / 10.0);

    for slot in 0..MAX_OBJECT_SLOTS {
        match sim.objects.get(slot) {
            Some(obj) => {
                let held = sim.carried == Some(ItemRef::Object(slot));
                o.push(1.0);
                o.push(if obj.shape == Shape::Ball { 1.0 } else { 0.0 });
                o.push(if obj.shape == Shape::Box { 1.0 } else { 0.0 });
                o.push(obj.color.ordinal() as f64 / 3.0);
                o.push(obj.pos[0] / ex);
                o.push(obj.pos[1] / ey);
                o.push(if held { 1.0 } else { 0.0 });
            }
            None => o.extend([0.0; 7]),
        }
    }

    for slot in 0..MAX_DOOR_SLOTS {
        match sim.doors.get(slot) {
            Some(door) => {
                let (cx, cy) = door.cell.center(spec.cell_size);
                o.push(cx / ex);
                o.push(cy / ey);
                o.push(door.color.ordinal() as f64 / 3.0);
                o.push(if door.locked { 1.0 } else { 0.0 });
                o.push(door.open_fraction);
            }
            None => o.extend([0.0; 5]),
        }
    }

    for slot in 0..MAX_KEY_SLOTS {
        match sim.keys.get(slot) {
            Some(key) => {
                let held = sim.carried == Some(ItemRef::Key(slot));
                o.push(if key.present { 1.0 } else { 0.0 });
                o.push(key.color.ordinal() as f64 / 3.0);
                o.push(if key.present { key.pos[0] / ex } else { 0.0 });
                o.push(if key.present { key.pos[1] / ey } else { 0.0 });
                o.push(if held { 1.0 } else { 0.0 });
            }
            None => o.extend([0.0; 5]),
        }
    }

    match kind {
        None => o.extend(vec![0.0; subgoal_block_len(None)]),
        Some(AbstractionKind::Grid) => {
            let grid = subgoal.and_then(|sv| match sv.state {
                AbstractState::Grid(g) => Some((g, sv.action)),
                AbstractState::Room(_) => None,
            });
            match grid {
                Some((g, action)) => {
                    let (cx, cy) = g.agent.center(spec.cell_size);
                    o.push((cx - sim.agent_pos[0]) / spec.cell_size);
                    o.push((cy - sim.agent_pos[1]) / spec.cell_size);
                    push_macro_block(&mut o, action);
                    o.push(item_hint(spec, action));
                }
                None => o.extend(vec![0.0; 9]),
            }
        }
        Some(k @ (AbstractionKind::Room | AbstractionKind::RoomPos)) => {
            let room = subgoal.and_then(|sv| match sv.state {
                AbstractState::Room(r) => Some((r, sv.action)),
                AbstractState::Grid(_) => None,
            });
            match room {
                Some((r, action)) => {
                    o.push(f64::from(r.agent_room) / 8.0);
                    let base = o.len();
                    o.extend([0.0; 8]);
                    for &t in &r.near {
                        if let Some(slot) = near_slot(spec, t) {
                            o[base + slot] = 1.0;
                        }
                    }
                    push_macro_block(&mut o, action);
                    if k == AbstractionKind::RoomPos {
                        match r.target_cell {
                            Some(cell) => {
                                let (cx, cy) = cell.center(spec.cell_size);
                                o.push((cx - sim.agent_pos[0]) / spec.cell_size);
                                o.push((cy - sim.agent_pos[1]) / spec.cell_size);
                            }
                            None => o.extend([0.0; 2]),
                        }
                    }
                }
                None => o.extend(vec![0.0; subgoal_block_len(Some(k))]),
            }
        }
    }

    let fam_idx = TaskFamily::ALL
        .iter()
        .position(|f| *f == spec.task.family)
        .expect("every family is enumerated");
    for i in 0..TaskFamily::ALL.len() {
        o.push(if i == fam_idx { 1.0 } else { 0.0 });
    }
    o.push(f64::from(spec.task.difficulty) / 12.0);
    match spec.task.target_object {
        Some((shape, color)) => {
            o.push(1.0);
            o.push(shape.ordinal() as f64);
            o.push(color.ordinal() as f64 / 3.0);
        }
        None => o.extend([0.0; 3]),
    }

    debug_assert_eq!(o.len(), obs_len(kind));
    o
}

/// Generalized advantage estimation over one contiguous episode segment.
/// `last_value` bootstraps the tail: zero when the segment ended in a
/// terminal state, the critic's estimate of the final observation when the
/// segment was cut off (timeout or end of a collection window).
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    last_value: f64,
    gamma: f64,
    lam: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lam * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Two tanh hidden layers and a linear head over one flat parameter vector.
/// Layout: `[w1 (h x in), b1, w2 (h x h), b2, w3 (out x h), b3]`.
#[derive(Debug, Clone)]
struct Net {
    input: usize,
    hidden: usize,
    output: usize,
    theta: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct NetCache {
    h1: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
}

impl Net {
    fn param_count(input: usize, hidden: usize, output: usize) -> usize {
        hidden * input + hidden + hidden * hidden + hidden + output * hidden + output
    }

    fn new<R: Rng>(input: usize, hidden: usize, output: usize, head_scale: f64, rng: &mut R) -> Net {
        let mut theta = Vec::with_capacity(Net::param_count(input, hidden, output));
        let mut layer = |rows: usize, cols: usize, scale: f64| {
            let limit = scale * (6.0 / (rows + cols) as f64).sqrt();
            for _ in 0..rows * cols {
                theta.push(rng.random_range(-limit..limit));
            }
            for _ in 0..rows {
                theta.push(0.0);
            }
        };
        layer(hidden, input, 1.0);
        layer(hidden, hidden, 1.0);
        layer(output, hidden, head_scale);
        Net { input, hidden, output, theta }
    }

    fn offsets(&self) -> [usize; 6] {
        let (i, h, o) = (self.input, self.hidden, self.output);
        let w1 = 0;
        let b1 = w1 + h * i;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + o * h;
        [w1, b1, w2, b2, w3, b3]
    }

    fn forward(&self, x: &[f64], cache: &mut NetCache) {
        assert_eq!(x.len(), self.input);
        let (h, o) = (self.hidden, self.output);
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let t = &self.theta;
        cache.h1.resize(h, 0.0);
        cache.h2.resize(h, 0.0);
        cache.out.resize(o, 0.0);
        for r in 0..h {
            let row = &t[w1 + r * self.input..w1 + (r + 1) * self.input];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + t[b1 + r];
            cache.h1[r] = z.tanh();
        }
        for r in 0..h {
            let row = &t[w2 + r * h..w2 + (r + 1) * h];
            let z: f64 = row.iter().zip(&cache.h1).map(|(w, v)| w * v).sum::<f64>() + t[b2 + r];
            cache.h2[r] = z.tanh();
        }
        for r in 0..o {
            let row = &t[w3 + r * h..w3 + (r + 1) * h];
            cache.out[r] = row.iter().zip(&cache.h2).map(|(w, v)| w * v).sum::<f64>() + t[b3 + r];
        }
    }

    fn output(&self, x: &[f64]) -> Vec<f64> {
        let mut cache = NetCache::default();
        self.forward(x, &mut cache);
        cache.out
    }

    /// Accumulates `d loss / d theta` into `grad` for the cached forward
    /// pass, given `d loss / d output`.
    fn backward(&self, x: &[f64], cache: &NetCache, dout: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.theta.len());
        let (h, o) = (self.hidden, self.output);
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let t = &self.theta;

        let mut dh2 = vec![0.0; h];
        for r in 0..o {
            let d = dout[r];
            grad[b3 + r] += d;
            for c in 0..h {
                grad[w3 + r * h + c] += d * cache.h2[c];
                dh2[c] += d * t[w3 + r * h + c];
            }
        }
        let mut dh1 = vec![0.0; h];
        for r in 0..h {
            let dz = dh2[r] * (1.0 - cache.h2[r] * cache.h2[r]);
            grad[b2 + r] += dz;
            for c in 0..h {
                grad[w2 + r * h + c] += dz * cache.h1[c];
                dh1[c] += dz * t[w2 + r * h + c];
            }
        }
        for r in 0..h {
            let dz = dh1[r] * (1.0 - cache.h1[r] * cache.h1[r]);
            grad[b1 + r] += dz;
            for c in 0..self.input {
                grad[w1 + r * self.input + c] += dz * x[c];
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize) -> Adam {
        Adam { m: vec![0.0; n], v: vec![0.0; n] }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64, t: u64) {
        let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
        for i in 0..theta.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            theta[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + ADAM_EPS);
        }
    }
}

fn log_prob(action: &[f64; ACTION_DIM], mean: &[f64], log_std: &[f64]) -> f64 {
    let mut lp = 0.0;
    for d in 0..ACTION_DIM {
        let std = log_std[d].exp();
        let z = (action[d] - mean[d]) / std;
        lp += -0.5 * z * z - log_std[d] - 0.5 * LN_2PI;
    }
    lp
}

#[derive(Debug, Clone, Copy)]
struct SampleEval {
    loss: f64,
    policy_term: f64,
    value_term: f64,
    entropy: f64,
    kl: f64,
    clipped: bool,
    dmean: [f64; ACTION_DIM],
    dlog_std: [f64; ACTION_DIM],
    dvalue: f64,
}

/// Per-sample loss and its gradients with respect to the actor mean, the log
/// standard deviations, and the critic output. Pure math; the caller owns the
/// network forward and backward passes.
fn eval_sample(
    cfg: &PpoConfig,
    log_std: &[f64],
    mean: &[f64],
    value: f64,
    action: &[f64; ACTION_DIM],
    logp_old: f64,
    adv: f64,
    ret: f64,
    u: &[f64; ACTION_DIM],
) -> SampleEval {
    let mut shifted = [0.0; ACTION_DIM];
    for d in 0..ACTION_DIM {
        shifted[d] = mean[d] + u[d];
    }
    let logp_new = log_prob(action, &shifted, log_std);
    let ratio = (logp_new - logp_old).exp();
    let clipped_ratio = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
    let surr = ratio * adv;
    let surr_clipped = clipped_ratio * adv;
    let policy_term = -surr.min(surr_clipped);
    let flows = surr <= surr_clipped;
    let dlogp = if flows { -adv * ratio } else { 0.0 };

    let mut entropy = 0.0;
    let mut dmean = [0.0; ACTION_DIM];
    let mut dlog_std = [0.0; ACTION_DIM];
    for d in 0..ACTION_DIM {
        let std = log_std[d].exp();
        let z = (action[d] - shifted[d]) / std;
        dmean[d] = dlogp * z / std;
        dlog_std[d] = dlogp * (z * z - 1.0) - cfg.entropy_coef;
        entropy += log_std[d] + 0.5 * (1.0 + LN_2PI);
    }
    let value_term = 0.5 * cfg.value_coef * (value - ret) * (value - ret);
    let dvalue = cfg.value_coef * (value - ret);
    SampleEval {
        loss: policy_term + value_term - cfg.entropy_coef * entropy,
        policy_term,
        value_term,
        entropy,
        kl: logp_old - logp_new,
        clipped: (ratio - 1.0).abs() > cfg.clip,
        dmean,
        dlog_std,
        dvalue,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Default, Clone)]
pub struct RolloutBatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub logp: Vec<f64>,
    pub adv: Vec<f64>,
    pub ret: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn push(&mut self, obs: Vec<f64>, action: [f64; ACTION_DIM], logp: f64, adv: f64, ret: f64) {
        self.obs.push(obs);
        self.actions.push(action);
        self.logp.push(logp);
        self.adv.push(adv);
        self.ret.push(ret);
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.actions.clear();
        self.logp.clear();
        self.adv.clear();
        self.ret.clear();
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: PpoConfig,
    pub obs_dim: usize,
    actor: Net,
    critic: Net,
    log_std: Vec<f64>,
    opt_actor: Adam,
    opt_critic: Adam,
    opt_log_std: Adam,
    adam_t: u64,
    pub env_steps: u64,
    pub episodes: u64,
    pub updates: u64,
}

impl Agent {
    pub fn new<R: Rng>(obs_dim: usize, cfg: PpoConfig, rng: &mut R) -> Agent {
        let actor = Net::new(obs_dim, cfg.hidden, ACTION_DIM, 0.01, rng);
        let critic = Net::new(obs_dim, cfg.hidden, 1, 1.0, rng);
        let na = actor.theta.len();
        let nc = critic.theta.len();
        Agent {
            cfg,
            obs_dim,
            actor,
            critic,
            log_std: vec![0.0; ACTION_DIM],
            opt_actor: Adam::new(na),
            opt_critic: Adam::new(nc),
            opt_log_std: Adam::new(ACTION_DIM),
            adam_t: 0,
            env_steps: 0,
            episodes: 0,
            updates: 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.actor.theta.len() + self.critic.theta.len() + self.log_std.len()
    }

    /// Samples an action. Stochastic draws consume, in order, one uniform
    /// mean shift per dimension (skipped entirely when `rpo_alpha` is zero)
    /// and one standard normal per dimension. Deterministic calls return the
    /// unperturbed mean and consume no randomness.
    pub fn act<R: Rng>(
        &self,
        obs: &[f64],
        rng: &mut R,
        stochastic: bool,
    ) -> ([f64; ACTION_DIM], f64, f64) {
        let mean = self.actor.output(obs);
        let value = self.critic.output(obs)[0];
        if !stochastic {
            let action = [mean[0], mean[1], mean[2]];
            let logp = log_prob(&action, &mean, &self.log_std);
            return (action, logp, value);
        }
        let mut shifted = [0.0; ACTION_DIM];
        for d in 0..ACTION_DIM {
            let u = if self.cfg.rpo_alpha > 0.0 {
                rng.random_range(-self.cfg.rpo_alpha..self.cfg.rpo_alpha)
            } else {
                0.0
            };
            shifted[d] = mean[d] + u;
        }
        let mut action = [0.0; ACTION_DIM];
        for d in 0..ACTION_DIM {
            let eps: f64 = rng.sample(StandardNormal);
            action[d] = shifted[d] + self.log_std[d].exp() * eps;
        }
        let logp = log_prob(&action, &shifted, &self.log_std);
        (action, logp, value)
    }

    pub fn value_of(&self, obs: &[f64]) -> f64 {
        self.critic.output(obs)[0]
    }

    fn accumulate_sample(
        &self,
        obs: &[f64],
        action: &[f64; ACTION_DIM],
        logp_old: f64,
        adv: f64,
        ret: f64,
        u: &[f64; ACTION_DIM],
        ga: &mut [f64],
        gc: &mut [f64],
        gs: &mut [f64],
        ca: &mut NetCache,
        cc: &mut NetCache,
    ) -> SampleEval {
        self.actor.forward(obs, ca);
        self.critic.forward(obs, cc);
        let eval = eval_sample(
            &self.cfg,
            &self.log_std,
            &ca.out,
            cc.out[0],
            action,
            logp_old,
            adv,
            ret,
            u,
        );
        self.actor.backward(obs, ca, &eval.dmean, ga);
        self.critic.backward(obs, cc, &[eval.dvalue], gc);
        for d in 0..ACTION_DIM {
            gs[d] += eval.dlog_std[d];
        }
        eval
    }

    /// One full optimization pass over a collected batch: advantages
    /// normalized once over the whole batch, then `epochs` shuffled sweeps
    /// split into `minibatches` chunks, gradients averaged, globally
    /// norm-clipped, and applied with Adam. Log standard deviations are
    /// projected back into their valid range after every step.
    pub fn update<R: Rng>(
        &mut self,
        batch: &RolloutBatch,
        rng: &mut R,
    ) -> Result<UpdateStats, LearnerError> {
        let n = batch.len();
        if n == 0 {
            return Ok(UpdateStats::default());
        }
        let mut stats = UpdateStats::default();
        let mut samples_seen = 0u64;
        let mut minibatch_steps = 0u64;

        let mut indices: Vec<usize> = (0..n).collect();
        let mut ga = vec![0.0; self.actor.theta.len()];
        let mut gc = vec![0.0; self.critic.theta.len()];
        let mut gs = vec![0.0; ACTION_DIM];
        let mut ca = NetCache::default();
        let mut cc = NetCache::default();

        let chunks = (self.cfg.minibatches.max(1) as usize).min(n);
        let chunk_len = n.div_ceil(chunks);

        let mean_adv = batch.adv.iter().sum::<f64>() / n as f64;
        let std_adv = if n > 1 {
            (batch.adv.iter().map(|a| (a - mean_adv).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };

        for _ in 0..self.cfg.epochs {
            indices.shuffle(rng);
            for chunk in indices.chunks(chunk_len) {
                ga.fill(0.0);
                gc.fill(0.0);
                gs.fill(0.0);
                let mut chunk_loss = 0.0;
                for &i in chunk {
                    let adv = (batch.adv[i] - mean_adv) / (std_adv + 1e-8);
                    let mut u = [0.0; ACTION_DIM];
                    if self.cfg.rpo_alpha > 0.0 {
                        for slot in &mut u {
                            *slot = rng.random_range(-self.cfg.rpo_alpha..self.cfg.rpo_alpha);
                        }
                    }
                    let eval = self.accumulate_sample(
                        &batch.obs[i],
                        &batch.actions[i],
                        batch.logp[i],
                        adv,
                        batch.ret[i],
                        &u,
                        &mut ga,
                        &mut gc,
                        &mut gs,
                        &mut ca,
                        &mut cc,
                    );
                    chunk_loss += eval.loss;
                    stats.policy_loss += eval.policy_term;
                    stats.value_loss += eval.value_term;
                    stats.entropy += eval.entropy;
                    stats.approx_kl += eval.kl;
                    stats.clip_fraction += if eval.clipped { 1.0 } else { 0.0 };
                    samples_seen += 1;
                }
                if !chunk_loss.is_finite() {
                    return Err(LearnerError::NonFiniteLoss {
                        minibatch: minibatch_steps,
                        detail: dump_minibatch(batch, chunk),
                    });
                }

                let inv = 1.0 / chunk.len() as f64;
                for g in ga.iter_mut().chain(gc.iter_mut()).chain(gs.iter_mut()) {
                    *g *= inv;
                }
                let norm = ga
                    .iter()
                    .chain(gc.iter())
                    .chain(gs.iter())
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                stats.grad_norm += norm;
                minibatch_steps += 1;
                if norm > self.cfg.grad_clip {
                    let scale = self.cfg.grad_clip / norm;
                    for g in ga.iter_mut().chain(gc.iter_mut()).chain(gs.iter_mut()) {
                        *g *= scale;
                    }
                }

                self.adam_t += 1;
                self.opt_actor.step(&mut self.actor.theta, &ga, self.cfg.lr, self.adam_t);
                self.opt_critic.step(&mut self.critic.theta, &gc, self.cfg.lr, self.adam_t);
                self.opt_log_std.step(&mut self.log_std, &gs, self.cfg.lr, self.adam_t);
                for d in &mut self.log_std {
                    *d = d.clamp(LOG_STD_MIN, LOG_STD_MAX);
                }
            }
        }

        let inv_samples = 1.0 / samples_seen.max(1) as f64;
        stats.policy_loss *= inv_samples;
        stats.value_loss *= inv_samples;
        stats.entropy *= inv_samples;
        stats.approx_kl *= inv_samples;
        stats.clip_fraction *= inv_samples;
        stats.grad_norm /= minibatch_steps.max(1) as f64;
        self.updates += 1;
        Ok(stats)
    }
}

/// Compares analytic gradients of the summed per-sample loss against central
/// finite differences on one randomly drawn tiny instance: a small agent, a
/// four-sample batch, and fixed mean perturbations. Returns the largest
/// relative error over every actor, critic, and log-std parameter, measured
/// against `max(|analytic|, 1)`.
///
/// Old log-probabilities are placed so each sample's ratio sits well away
/// from the clipping boundary (two samples inside it, two beyond it), keeping
/// the loss differentiable at the evaluation point while exercising both
/// branches of the surrogate.
pub fn gradient_check(seed: u64) -> f64 {
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let obs_dim = rng.random_range(3..=6);
    let cfg = PpoConfig {
        hidden: rng.random_range(3..=5),
        entropy_coef: if seed % 2 == 0 { 0.0 } else { 0.01 },
        ..PpoConfig::default()
    };
    let mut agent = Agent::new(obs_dim, cfg, &mut rng);
    for d in &mut agent.log_std {
        *d = rng.random_range(-0.5..0.5);
    }

    const BATCH: usize = 4;
    let ratio_targets = [0.7, 0.95, 1.05, 1.4];
    let mut obs: Vec<Vec<f64>> = Vec::new();
    let mut actions = Vec::new();
    let mut logp_old = Vec::new();
    let mut advs = Vec::new();
    let mut rets = Vec::new();
    let mut us = Vec::new();
    for target in ratio_targets {
        let x: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let action = [(); ACTION_DIM].map(|_| rng.random_range(-1.0..1.0));
        let u = [(); ACTION_DIM].map(|_| rng.random_range(-0.3..0.3));
        let mean = agent.actor.output(&x);
        let mut shifted = [0.0; ACTION_DIM];
        for d in 0..ACTION_DIM {
            shifted[d] = mean[d] + u[d];
        }
        let logp_now = log_prob(&action, &shifted, &agent.log_std);
        logp_old.push(logp_now - f64::ln(target));
        obs.push(x);
        actions.push(action);
        advs.push(rng.random_range(-2.0..2.0));
        rets.push(rng.random_range(-2.0..2.0));
        us.push(u);
    }

    let mut ga = vec![0.0; agent.actor.theta.len()];
    let mut gc = vec![0.0; agent.critic.theta.len()];
    let mut gs = vec![0.0; ACTION_DIM];
    let mut ca = NetCache::default();
    let mut cc = NetCache::default();
    for i in 0..BATCH {
        agent.accumulate_sample(
            &obs[i], &actions[i], logp_old[i], advs[i], rets[i], &us[i],
            &mut ga, &mut gc, &mut gs, &mut ca, &mut cc,
        );
    }

    let loss_of = |agent: &Agent| -> f64 {
        (0..BATCH)
            .map(|i| {
                let mean = agent.actor.output(&obs[i]);
                let value = agent.critic.output(&obs[i])[0];
                eval_sample(
                    &agent.cfg,
                    &agent.log_std,
                    &mean,
                    value,
                    &actions[i],
                    logp_old[i],
                    advs[i],
                    rets[i],
                    &us[i],
                )
                .loss
            })
            .sum()
    };

    const H: f64 = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = |analytic: f64, plus: f64, minus: f64| {
        let numeric = (plus - minus) / (2.0 * H);
        let rel = (numeric - analytic).abs() / analytic.abs().max(1.0);
        worst = worst.max(rel);
    };
    for p in 0..ga.len() {
        let saved = agent.actor.theta[p];
        agent.actor.theta[p] = saved + H;
        let plus = loss_of(&agent);
        agent.actor.theta[p] = saved - H;
        let minus = loss_of(&agent);
        agent.actor.theta[p] = saved;
        probe(ga[p], plus, minus);
    }
    for p in 0..gc.len() {
        let saved = agent.critic.theta[p];
        agent.critic.theta[p] = saved + H;
        let plus = loss_of(&agent);
        agent.critic.theta[p] = saved - H;
        let minus = loss_of(&agent);
        agent.critic.theta[p] = saved;
        probe(gc[p], plus, minus);
    }
    for d in 0..ACTION_DIM {
        let saved = agent.log_std[d];
        agent.log_std[d] = saved + H;
        let plus = loss_of(&agent);
        agent.log_std[d] = saved - H;
        let minus = loss_of(&agent);
        agent.log_std[d] = saved;
        probe(gs[d], plus, minus);
    }
    worst
}

/// Summary of the samples in a minibatch whose loss went non-finite, for the
/// abort report.
fn dump_minibatch(batch: &RolloutBatch, chunk: &[usize]) -> String {
    use std::fmt::Write as _;
    let mut out = format!("{} samples;", chunk.len());
    for &i in chunk.iter().take(8) {
        let bad_obs = batch.obs[i].iter().filter(|v| !v.is_finite()).count();
        let _ = write!(
            out,
            " [{i}] adv {:.3e} ret {:.3e} logp {:.3e} nonfinite_obs {bad_obs};",
            batch.adv[i], batch.ret[i], batch.logp[i]
        );
    }
    if chunk.len() > 8 {
        out.push_str(" ...");
    }
    out
}

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(&'static str),
    #[error("non-finite loss in minibatch {minibatch}: {detail}")]
    NonFiniteLoss { minibatch: u64, detail: String },
}

/// Checkpoint header fields, also the `describe` payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointInfo {
    pub version: u32,
    pub digest: [u8; 32],
    pub kind: Option<AbstractionKind>,
    pub shaping: bool,
    pub subgoal: bool,
    pub obs_dim: u32,
    pub act_dim: u32,
    pub hidden: u32,
    pub env_steps: u64,
    pub episodes: u64,
    pub updates: u64,
    pub params: u64,
}

impl CheckpointInfo {
    pub fn digest_hex(&self) -> String {
        self.digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for CheckpointInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "checkpoint version {}", self.version)?;
        writeln!(f, "config digest {}", self.digest_hex())?;
        let kind = self.kind.map_or("none", |k| k.name());
        writeln!(f, "abstraction {kind}")?;
        writeln!(f, "reward shaping {}", if self.shaping { "on" } else { "off" })?;
        writeln!(f, "subgoal conditioning {}", if self.subgoal { "on" } else { "off" })?;
        writeln!(
            f,
            "observation dim {}, action dim {}, hidden {}",
            self.obs_dim, self.act_dim, self.hidden
        )?;
        writeln!(f, "parameters {}", self.params)?;
        write!(
            f,
            "trained {} updates, {} env steps, {} episodes",
            self.updates, self.env_steps, self.episodes
        )
    }
}

fn kind_byte(kind: Option<AbstractionKind>) -> u8 {
    match kind {
        None => 0,
        Some(AbstractionKind::Grid) => 1,
        Some(AbstractionKind::Room) => 2,
        Some(AbstractionKind::RoomPos) => 3,
    }
}

fn byte_kind(b: u8) -> Result<Option<AbstractionKind>, LearnerError> {
    match b {
        0 => Ok(None),
        1 => Ok(Some(AbstractionKind::Grid)),
        2 => Ok(Some(AbstractionKind::Room)),
        3 => Ok(Some(AbstractionKind::RoomPos)),
        _ => Err(LearnerError::Corrupt("unknown abstraction tag")),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LearnerError> {
        let end = self.at.checked_add(n).ok_or(LearnerError::Corrupt("length overflow"))?;
        if end > self.buf.len() {
            return Err(LearnerError::Corrupt("truncated file"));
        }
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, LearnerError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, LearnerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, LearnerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self) -> Result<Vec<f64>, LearnerError> {
        let n = self.u64()? as usize;
        let raw = self.take(n.checked_mul(8).ok_or(LearnerError::Corrupt("length overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl Agent {
    pub fn save(
        &self,
        path: &Path,
        digest: [u8; 32],
        kind: Option<AbstractionKind>,
        shaping: bool,
        subgoal: bool,
    ) -> Result<(), LearnerError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&digest);
        buf.push(kind_byte(kind));
        buf.push(u8::from(shaping));
        buf.push(u8::from(subgoal));
        buf.extend_from_slice(&(self.obs_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(ACTION_DIM as u32).to_le_bytes());
        buf.extend_from_slice(&(self.cfg.hidden as u32).to_le_bytes());
        buf.extend_from_slice(&self.env_steps.to_le_bytes());
        buf.extend_from_slice(&self.episodes.to_le_bytes());
        buf.extend_from_slice(&self.updates.to_le_bytes());
        for arr in [&self.actor.theta, &self.critic.theta, &self.log_std] {
            buf.extend_from_slice(&(arr.len() as u64).to_le_bytes());
            for v in arr {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Reads a checkpoint back. The returned agent carries default
    /// optimization settings (with the stored hidden width) and a fresh
    /// optimizer; it is ready for inference and description, not for
    /// resuming an interrupted optimization.
    pub fn load(path: &Path) -> Result<(Agent, CheckpointInfo), LearnerError> {
        let data = std::fs::read(path)?;
        let mut r = Reader { buf: &data, at: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(LearnerError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(LearnerError::UnsupportedVersion(version));
        }
        let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
        let kind = byte_kind(r.u8()?)?;
        let shaping = r.u8()? != 0;
        let subgoal = r.u8()? != 0;
        let obs_dim = r.u32()?;
        let act_dim = r.u32()?;
        let hidden = r.u32()?;
        if act_dim as usize != ACTION_DIM {
            return Err(LearnerError::Corrupt("unexpected action dimension"));
        }
        let env_steps = r.u64()?;
        let episodes = r.u64()?;
        let updates = r.u64()?;
        let actor_theta = r.f64_vec()?;
        let critic_theta = r.f64_vec()?;
        let log_std = r.f64_vec()?;

        let (od, h) = (obs_dim as usize, hidden as usize);
        if actor_theta.len() != Net::param_count(od, h, ACTION_DIM)
            || critic_theta.len() != Net::param_count(od, h, 1)
            || log_std.len() != ACTION_DIM
        {
            return Err(LearnerError::Corrupt("parameter count mismatch"));
        }

        let cfg = PpoConfig { hidden: h, ..PpoConfig::default() };
        let mut init_rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut agent = Agent::new(od, cfg, &mut init_rng);
        agent.actor.theta = actor_theta;
        agent.critic.theta = critic_theta;
        agent.log_std = log_std;
        agent.env_steps = env_steps;
        agent.episodes = episodes;
        agent.updates = updates;

        let params = agent.param_count() as u64;
        let info = CheckpointInfo {
            version,
            digest,
            kind,
            shaping,
            subgoal,
            obs_dim,
            act_dim,
            hidden,
            env_steps,
            episodes,
            updates,
            params,
        };
        Ok((agent, info))
    }
}

pub fn describe_checkpoint(path: &Path) -> Result<CheckpointInfo, LearnerError> {
    Agent::load(path).map(|(_, info)| info)
}
