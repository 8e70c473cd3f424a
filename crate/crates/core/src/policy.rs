//! Dual-head Gaussian actor and value critic.
//!
//! The actor is a 2-hidden-layer tanh MLP with two linear heads off the same
//! trunk: the action head produces the pre-squash mean of the control
//! distribution, and the prediction head produces the pre-squash mean of the
//! *next* action expected after the environment transitions. A
//! state-independent log-std vector completes the Gaussian. Executed actions
//! are `center + half * tanh(u)` with `u` drawn from the Gaussian, which
//! keeps every emitted action inside the environment's bounds.
//!
//! All smoothness losses operate on the deterministic squashed means, never
//! on sampled actions.
//!
//! Parameters live in plain tensors. Rollouts use a direct forward pass;
//! updates rebuild the same computation on a [`Tape`] whose matmuls share the
//! accumulation routine with the direct path, so both agree bit for bit.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::EnvRng;
use crate::error::{Error, Result};
use crate::tape::{Tape, VarId};
use crate::tensor::{matmul_data, Tensor};
use crate::Tensor64;

const LOG_STD_INIT: f64 = -0.5;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8; // 0.5 * ln(2 * pi)

/// One linear layer: `y = x W + b`, with `W: [in, out]`, `b: [out]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub w: Tensor64,
    pub b: Tensor64,
}

impl Linear {
    /// Xavier-uniform weights, zero bias.
    pub fn xavier(fan_in: usize, fan_out: usize, rng: &mut EnvRng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
        Linear {
            w: Tensor::matrix(fan_in, fan_out, data).expect("xavier shape"),
            b: Tensor::zeros(&[fan_out]),
        }
    }

    /// Direct forward for a single input vector, mirroring the tape's
    /// matmul-then-bias order exactly.
    fn forward_vec(&self, x: &[f64]) -> Vec<f64> {
        let (k, c) = (self.w.shape()[0], self.w.shape()[1]);
        let mut out = matmul_data(x, self.w.data(), 1, k, c);
        for (o, &b) in out.iter_mut().zip(self.b.data()) {
            *o += b;
        }
        out
    }
}

fn tanh_inplace(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = x.tanh();
    }
}

/// `log(1 - tanh(u)^2)` evaluated stably for large `|u|`.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let a = u.abs();
    2.0 * (std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p())
}

/// Which part of the actor a parameter index belongs to; the split matters
/// because the smoothness losses promise asymmetric gradient flow between
/// the two heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Trunk,
    ActionHead,
    LogStd,
    PredictionHead,
}

pub const ACTOR_PARAM_NAMES: [&str; 9] = [
    "trunk1_w",
    "trunk1_b",
    "trunk2_w",
    "trunk2_b",
    "action_head_w",
    "action_head_b",
    "log_std",
    "prediction_head_w",
    "prediction_head_b",
];

pub fn actor_param_group(index: usize) -> ParamGroup {
    match index {
        0..=3 => ParamGroup::Trunk,
        4 | 5 => ParamGroup::ActionHead,
        6 => ParamGroup::LogStd,
        7 | 8 => ParamGroup::PredictionHead,
        _ => panic!("actor has 9 parameter tensors"),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Actor {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub hidden: usize,
    pub trunk1: Linear,
    pub trunk2: Linear,
    pub action_head: Linear,
    pub prediction_head: Linear,
    pub log_std: Tensor64,
    /// Midpoint of the action interval per dimension.
    pub center: Vec<f64>,
    /// Half-width of the action interval per dimension.
    pub half: Vec<f64>,
}

/// Tape handles for one actor's parameters.
#[derive(Clone, Copy, Debug)]
pub struct ActorVars {
    pub trunk1_w: VarId,
    pub trunk1_b: VarId,
    pub trunk2_w: VarId,
    pub trunk2_b: VarId,
    pub action_head_w: VarId,
    pub action_head_b: VarId,
    pub log_std: VarId,
    pub prediction_head_w: VarId,
    pub prediction_head_b: VarId,
}

impl ActorVars {
    pub fn all(&self) -> [VarId; 9] {
        [
            self.trunk1_w,
            self.trunk1_b,
            self.trunk2_w,
            self.trunk2_b,
            self.action_head_w,
            self.action_head_b,
            self.log_std,
            self.prediction_head_w,
            self.prediction_head_b,
        ]
    }
}

/// A sampled control with its pre-squash value and exact log-density.
#[derive(Clone, Debug)]
pub struct ActionSample {
    /// Executed (squashed, in-bounds) action.
    pub action: Vec<f64>,
    /// Pre-squash Gaussian draw `u = mean + std * z`.
    pub raw: Vec<f64>,
    /// Deterministic squashed mean at this observation.
    pub mean: Vec<f64>,
    /// Log-density of `action` including the squash change of variables.
    pub log_prob: f64,
}

impl Actor {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        hidden: usize,
        action_low: &[f64],
        action_high: &[f64],
        rng: &mut EnvRng,
    ) -> Self {
        assert_eq!(action_low.len(), action_dim);
        assert_eq!(action_high.len(), action_dim);
        let center: Vec<f64> =
            action_low.iter().zip(action_high).map(|(&lo, &hi)| 0.5 * (lo + hi)).collect();
        let half: Vec<f64> =
            action_low.iter().zip(action_high).map(|(&lo, &hi)| 0.5 * (hi - lo)).collect();
        Actor {
            obs_dim,
            action_dim,
            hidden,
            trunk1: Linear::xavier(obs_dim, hidden, rng),
            trunk2: Linear::xavier(hidden, hidden, rng),
            action_head: Linear::xavier(hidden, action_dim, rng),
            prediction_head: Linear::xavier(hidden, action_dim, rng),
            log_std: Tensor::full(&[action_dim], LOG_STD_INIT),
            center,
            half,
        }
    }

    pub fn params(&self) -> Vec<&Tensor64> {
        vec![
            &self.trunk1.w,
            &self.trunk1.b,
            &self.trunk2.w,
            &self.trunk2.b,
            &self.action_head.w,
            &self.action_head.b,
            &self.log_std,
            &self.prediction_head.w,
            &self.prediction_head.b,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor64> {
        vec![
            &mut self.trunk1.w,
            &mut self.trunk1.b,
            &mut self.trunk2.w,
            &mut self.trunk2.b,
            &mut self.action_head.w,
            &mut self.action_head.b,
            &mut self.log_std,
            &mut self.prediction_head.w,
            &mut self.prediction_head.b,
        ]
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim {
            return Err(Error::contract(format!(
                "observation dim {} != {}",
                obs.len(),
                self.obs_dim
            )));
        }
        if obs.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("non-finite observation"));
        }
        Ok(())
    }

    fn trunk_vec(&self, obs: &[f64]) -> Vec<f64> {
        let mut h = self.trunk1.forward_vec(obs);
        tanh_inplace(&mut h);
        let mut h2 = self.trunk2.forward_vec(&h);
        tanh_inplace(&mut h2);
        h2
    }

    fn squash_vec(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.center.iter().zip(&self.half))
            .map(|(&u, (&c, &h))| c + h * u.tanh())
            .collect()
    }

    /// Pre-squash action mean.
    pub fn raw_action_mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        Ok(self.action_head.forward_vec(&self.trunk_vec(obs)))
    }

    /// Deterministic squashed action mean; always inside the action bounds.
    pub fn act_mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let raw = self.raw_action_mean(obs)?;
        Ok(self.squash_vec(&raw))
    }

    /// Squashed mean of the prediction head (next expected action).
    pub fn predict_next_mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        let raw = self.prediction_head.forward_vec(&self.trunk_vec(obs));
        Ok(self.squash_vec(&raw))
    }

    /// Gaussian log-density of the pre-squash vector `u` under the current
    /// parameters at observation `obs` (no squash correction).
    pub fn gaussian_log_prob(&self, raw_mean: &[f64], raw: &[f64]) -> f64 {
        let mut lp = 0.0;
        for j in 0..self.action_dim {
            let log_std = self.log_std.data()[j];
            let inv_std = (-log_std).exp();
            let z = (raw[j] - raw_mean[j]) * inv_std;
            lp += -0.5 * z * z - log_std - HALF_LN_2PI;
        }
        lp
    }

    /// Change-of-variables term turning the Gaussian density on `u` into the
    /// density of the executed action.
    pub fn squash_correction(&self, raw: &[f64]) -> f64 {
        raw.iter()
            .zip(&self.half)
            .map(|(&u, &h)| h.ln() + log_one_minus_tanh_sq(u))
            .sum()
    }

    /// Draws one action; deterministic given the RNG state.
    pub fn sample_action(&self, obs: &[f64], rng: &mut EnvRng) -> Result<ActionSample> {
        let raw_mean = self.raw_action_mean(obs)?;
        let mut raw = Vec::with_capacity(self.action_dim);
        for j in 0..self.action_dim {
            let z: f64 = rng.sample(StandardNormal);
            raw.push(raw_mean[j] + self.log_std.data()[j].exp() * z);
        }
        let log_prob = self.gaussian_log_prob(&raw_mean, &raw) - self.squash_correction(&raw);
        if !log_prob.is_finite() {
            return Err(Error::numeric("non-finite log-probability"));
        }
        Ok(ActionSample {
            action: self.squash_vec(&raw),
            raw,
            mean: self.squash_vec(&raw_mean),
            log_prob,
        })
    }

    /// Gaussian entropy (the squash correction is dropped, as is standard for
    /// the PPO entropy bonus): `sum(log_std) + 0.5 d ln(2 pi e)`.
    pub fn entropy(&self) -> f64 {
        let d = self.action_dim as f64;
        self.log_std.data().iter().sum::<f64>() + 0.5 * d * (1.0 + 2.0 * HALF_LN_2PI)
    }

    // ── tape-side builders ──────────────────────────────────────────────

    /// Inserts all parameters as differentiable leaves.
    pub fn insert_leaves(&self, tape: &mut Tape<f64>) -> ActorVars {
        ActorVars {
            trunk1_w: tape.leaf(self.trunk1.w.clone()),
            trunk1_b: tape.leaf(self.trunk1.b.clone()),
            trunk2_w: tape.leaf(self.trunk2.w.clone()),
            trunk2_b: tape.leaf(self.trunk2.b.clone()),
            action_head_w: tape.leaf(self.action_head.w.clone()),
            action_head_b: tape.leaf(self.action_head.b.clone()),
            log_std: tape.leaf(self.log_std.clone()),
            prediction_head_w: tape.leaf(self.prediction_head.w.clone()),
            prediction_head_b: tape.leaf(self.prediction_head.b.clone()),
        }
    }

    /// Trunk activations for a `[B, obs_dim]` observation batch.
    pub fn graph_trunk(&self, tape: &mut Tape<f64>, vars: &ActorVars, obs: VarId) -> Result<VarId> {
        let h1 = tape.matmul(obs, vars.trunk1_w)?;
        let h1 = tape.add_row(h1, vars.trunk1_b)?;
        let h1 = tape.tanh(h1)?;
        let h2 = tape.matmul(h1, vars.trunk2_w)?;
        let h2 = tape.add_row(h2, vars.trunk2_b)?;
        tape.tanh(h2)
    }

    pub fn graph_raw_action_mean(
        &self,
        tape: &mut Tape<f64>,
        vars: &ActorVars,
        trunk: VarId,
    ) -> Result<VarId> {
        let y = tape.matmul(trunk, vars.action_head_w)?;
        tape.add_row(y, vars.action_head_b)
    }

    pub fn graph_raw_prediction_mean(
        &self,
        tape: &mut Tape<f64>,
        vars: &ActorVars,
        trunk: VarId,
    ) -> Result<VarId> {
        let y = tape.matmul(trunk, vars.prediction_head_w)?;
        tape.add_row(y, vars.prediction_head_b)
    }

    /// `center + half * tanh(raw)` rowwise.
    pub fn graph_squash(&self, tape: &mut Tape<f64>, raw: VarId) -> Result<VarId> {
        let half = tape.constant(Tensor::vector(self.half.clone()));
        let center = tape.constant(Tensor::vector(self.center.clone()));
        let t = tape.tanh(raw)?;
        let scaled = tape.mul_row(t, half)?;
        tape.add_row(scaled, center)
    }

    /// Squashed action mean for an observation batch (trunk built inside).
    pub fn graph_action_mean(
        &self,
        tape: &mut Tape<f64>,
        vars: &ActorVars,
        obs: VarId,
    ) -> Result<VarId> {
        let trunk = self.graph_trunk(tape, vars, obs)?;
        let raw = self.graph_raw_action_mean(tape, vars, trunk)?;
        self.graph_squash(tape, raw)
    }

    /// Squashed prediction-head mean for an observation batch.
    pub fn graph_prediction_mean(
        &self,
        tape: &mut Tape<f64>,
        vars: &ActorVars,
        obs: VarId,
    ) -> Result<VarId> {
        let trunk = self.graph_trunk(tape, vars, obs)?;
        let raw = self.graph_raw_prediction_mean(tape, vars, trunk)?;
        self.graph_squash(tape, raw)
    }

    /// Per-sample Gaussian log-density `[B]` of stored pre-squash actions
    /// under the current parameters. `raw_actions` must be a constant
    /// `[B, action_dim]` node.
    pub fn graph_gaussian_log_prob(
        &self,
        tape: &mut Tape<f64>,
        vars: &ActorVars,
        raw_mean: VarId,
        raw_actions: VarId,
    ) -> Result<VarId> {
        let neg_log_std = tape.neg(vars.log_std)?;
        let inv_std = tape.exp(neg_log_std)?;
        let diff = tape.sub(raw_actions, raw_mean)?;
        let z = tape.mul_row(diff, inv_std)?;
        let sq = tape.square(z)?;
        let scaled = tape.scale(sq, -0.5)?;
        let centered = tape.add_row(scaled, neg_log_std)?;
        let shifted = tape.offset(centered, -HALF_LN_2PI)?;
        tape.sum_rows(shifted)
    }

    /// Scalar Gaussian entropy node (depends only on log_std).
    pub fn graph_entropy(&self, tape: &mut Tape<f64>, vars: &ActorVars) -> Result<VarId> {
        let s = tape.sum(vars.log_std)?;
        let d = self.action_dim as f64;
        tape.offset(s, 0.5 * d * (1.0 + 2.0 * HALF_LN_2PI))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Critic {
    pub obs_dim: usize,
    pub hidden: usize,
    pub l1: Linear,
    pub l2: Linear,
    pub head: Linear,
}

#[derive(Clone, Copy, Debug)]
pub struct CriticVars {
    pub l1_w: VarId,
    pub l1_b: VarId,
    pub l2_w: VarId,
    pub l2_b: VarId,
    pub head_w: VarId,
    pub head_b: VarId,
}

impl CriticVars {
    pub fn all(&self) -> [VarId; 6] {
        [self.l1_w, self.l1_b, self.l2_w, self.l2_b, self.head_w, self.head_b]
    }
}

impl Critic {
    pub fn new(obs_dim: usize, hidden: usize, rng: &mut EnvRng) -> Self {
        Critic {
            obs_dim,
            hidden,
            l1: Linear::xavier(obs_dim, hidden, rng),
            l2: Linear::xavier(hidden, hidden, rng),
            head: Linear::xavier(hidden, 1, rng),
        }
    }

    pub fn params(&self) -> Vec<&Tensor64> {
        vec![&self.l1.w, &self.l1.b, &self.l2.w, &self.l2.b, &self.head.w, &self.head.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor64> {
        vec![
            &mut self.l1.w,
            &mut self.l1.b,
            &mut self.l2.w,
            &mut self.l2.b,
            &mut self.head.w,
            &mut self.head.b,
        ]
    }

    /// State value for one observation.
    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        if obs.len() != self.obs_dim {
            return Err(Error::contract(format!("observation dim {} != {}", obs.len(), self.obs_dim)));
        }
        let mut h = self.l1.forward_vec(obs);
        tanh_inplace(&mut h);
        let mut h2 = self.l2.forward_vec(&h);
        tanh_inplace(&mut h2);
        Ok(self.head.forward_vec(&h2)[0])
    }

    pub fn insert_leaves(&self, tape: &mut Tape<f64>) -> CriticVars {
        CriticVars {
            l1_w: tape.leaf(self.l1.w.clone()),
            l1_b: tape.leaf(self.l1.b.clone()),
            l2_w: tape.leaf(self.l2.w.clone()),
            l2_b: tape.leaf(self.l2.b.clone()),
            head_w: tape.leaf(self.head.w.clone()),
            head_b: tape.leaf(self.head.b.clone()),
        }
    }

    /// `[B, 1]` value predictions for an observation batch.
    pub fn graph_value(&self, tape: &mut Tape<f64>, vars: &CriticVars, obs: VarId) -> Result<VarId> {
        let h1 = tape.matmul(obs, vars.l1_w)?;
        let h1 = tape.add_row(h1, vars.l1_b)?;
        let h1 = tape.tanh(h1)?;
        let h2 = tape.matmul(h1, vars.l2_w)?;
        let h2 = tape.add_row(h2, vars.l2_b)?;
        let h2 = tape.tanh(h2)?;
        let v = tape.matmul(h2, vars.head_w)?;
        tape.add_row(v, vars.head_b)
    }
}

/// Serialized model pair; round-trips through JSON bit-exactly (f64 values
/// are written with shortest-round-trip formatting).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub env_name: String,
    pub actor: Actor,
    pub critic: Critic,
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// FNV-1a over the exact bit patterns of every parameter, in declaration
/// order. Two models fingerprint equal iff they are bit-identical.
pub fn param_fingerprint(tensors: &[&Tensor64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in tensors {
        for &v in t.data() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        }
    }
    h
}

impl Checkpoint {
    pub fn new(config_hash: String, env_name: String, actor: Actor, critic: Critic) -> Self {
        Checkpoint { version: CHECKPOINT_VERSION, config_hash, env_name, actor, critic }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::contract(format!("checkpoint encode: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(s).map_err(|e| Error::contract(format!("checkpoint decode: {e}")))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::contract(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }
}
