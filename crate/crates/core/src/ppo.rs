//! Clipped-surrogate PPO with a triple-aware rollout buffer.
//!
//! The trainer interleaves sequential rollouts over `n_envs` environment
//! instances (each with its own RNG stream, stepped in a fixed order) with
//! minibatch Adam updates. The buffer tracks, for every timestep, whether a
//! three-step window centered there stays inside one episode; those windows
//! feed the smoothness regularizers, which join the surrogate in a single
//! assembled loss per minibatch.
//!
//! Everything is deterministic given the config seed: env streams are seeded
//! `seed + env_index`, and the action/update streams are independent
//! fixed-offset streams.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;

use crate::env::{Dynamics, Env, EnvRng};
use crate::error::{Error, Result};
use crate::optim::{clip_global_norm, Adam};
use crate::policy::{Actor, Critic};
use crate::smoothing::{
    assemble_policy_loss, build_regularizers, RegularizerSpec, TransitionTriple,
};
use crate::tape::VarId;
use crate::tensor::Tensor;
use crate::{Tape64, Tensor64};

#[derive(Clone, Debug, PartialEq)]
pub struct PpoConfig {
    pub n_envs: usize,
    pub rollout_len: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    pub lr: f64,
    pub hidden: usize,
    pub total_steps: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            n_envs: 8,
            rollout_len: 512,
            epochs: 10,
            minibatch_size: 512,
            clip_eps: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            lr: 3e-4,
            hidden: 64,
            total_steps: 100_000,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_envs == 0 || self.rollout_len == 0 || self.epochs == 0 || self.minibatch_size == 0
        {
            return Err(Error::contract("n_envs, rollout_len, epochs, minibatch_size must be >= 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::contract("gamma must be in (0, 1]"));
        }
        if !(self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0) {
            return Err(Error::contract("gae_lambda must be in [0, 1]"));
        }
        if !(self.clip_eps > 0.0) {
            return Err(Error::contract("clip_eps must be positive"));
        }
        if !(self.lr > 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(Error::contract("lr and max_grad_norm must be positive"));
        }
        if self.hidden == 0 {
            return Err(Error::contract("hidden width must be >= 1"));
        }
        Ok(())
    }
}

/// Generalized advantage estimation over one environment's slice.
/// `dones[t]` marks that the episode ended *at* step `t` (the next state
/// belongs to a new episode); `bootstrap` is the critic's value of the state
/// after the final step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::contract(format!(
            "gae length mismatch: rewards {n}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let cont = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * cont - values[t];
        running = delta + gamma * lam * cont * running;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Flat storage for one rollout across all environments; index `e * len + t`.
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub len: usize,
    pub obs: Vec<Vec<f64>>,
    /// Pre-squash sampled actions `u`.
    pub raw_actions: Vec<Vec<f64>>,
    /// Executed (squashed) actions.
    pub actions: Vec<Vec<f64>>,
    /// Deterministic squashed means at collection time.
    pub action_means: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub bootstrap_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Whether the three-step window centered at this index stays inside one
    /// episode.
    pub triple_center_valid: Vec<bool>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, len: usize) -> Self {
        let n = n_envs * len;
        RolloutBuffer {
            n_envs,
            len,
            obs: vec![Vec::new(); n],
            raw_actions: vec![Vec::new(); n],
            actions: vec![Vec::new(); n],
            action_means: vec![Vec::new(); n],
            log_probs: vec![0.0; n],
            rewards: vec![0.0; n],
            values: vec![0.0; n],
            dones: vec![false; n],
            bootstrap_values: vec![0.0; n_envs],
            advantages: Vec::new(),
            returns: Vec::new(),
            triple_center_valid: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n_envs * self.len
    }

    pub fn flat(&self, env: usize, t: usize) -> usize {
        env * self.len + t
    }

    /// Computes advantages/returns per environment, optionally normalizes
    /// advantages over the whole buffer, and marks valid triple centers.
    pub fn finalize(&mut self, gamma: f64, lam: f64, normalize: bool) -> Result<()> {
        let n = self.n();
        self.advantages = vec![0.0; n];
        self.returns = vec![0.0; n];
        for e in 0..self.n_envs {
            let lo = e * self.len;
            let hi = lo + self.len;
            let (adv, ret) = compute_gae(
                &self.rewards[lo..hi],
                &self.values[lo..hi],
                &self.dones[lo..hi],
                self.bootstrap_values[e],
                gamma,
                lam,
            )?;
            self.advantages[lo..hi].copy_from_slice(&adv);
            self.returns[lo..hi].copy_from_slice(&ret);
        }
        if normalize && n > 1 {
            let mean = self.advantages.iter().sum::<f64>() / n as f64;
            let var =
                self.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            for a in self.advantages.iter_mut() {
                *a = (*a - mean) / (std + 1e-8);
            }
        }
        self.triple_center_valid = vec![false; n];
        for e in 0..self.n_envs {
            for t in 1..self.len.saturating_sub(1) {
                let i = self.flat(e, t);
                self.triple_center_valid[i] = !self.dones[i - 1] && !self.dones[i];
            }
        }
        Ok(())
    }

    /// The triple centered at flat index `i`, if its window is valid.
    pub fn triple_at(&self, i: usize) -> Option<TransitionTriple> {
        if !self.triple_center_valid.get(i).copied().unwrap_or(false) {
            return None;
        }
        debug_assert!(!self.dones[i - 1] && !self.dones[i], "triple spans a done boundary");
        Some(TransitionTriple {
            s_prev: self.obs[i - 1].clone(),
            a_prev: self.actions[i - 1].clone(),
            s_cur: self.obs[i].clone(),
            a_cur: self.actions[i].clone(),
            s_next: self.obs[i + 1].clone(),
            a_next: self.actions[i + 1].clone(),
            reward: self.rewards[i],
            valid: true,
        })
    }
}

/// Negated clipped-surrogate objective from per-sample ratio and advantage
/// nodes: `-mean(min(ratio * adv, clip(ratio) * adv))`.
pub fn ppo_surrogate(tape: &mut Tape64, ratio: VarId, adv: VarId, clip_eps: f64) -> Result<VarId> {
    let surr1 = tape.mul(ratio, adv)?;
    let clipped = tape.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps)?;
    let surr2 = tape.mul(clipped, adv)?;
    let pointwise = tape.min(surr1, surr2)?;
    let mean = tape.mean(pointwise)?;
    tape.neg(mean)
}

/// Per-component loss values averaged over the minibatches of one update.
#[derive(Clone, Copy, Debug, Default)]
pub struct UpdateStats {
    pub j_pi: f64,
    pub l_s: f64,
    pub l_p: f64,
    pub l_t: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

/// One iteration's record on the metrics stream.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    pub steps: usize,
    pub mean_return: f64,
    pub j_pi: f64,
    pub l_s: f64,
    pub l_p: f64,
    pub l_t: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

fn gather_rows(rows: &[Vec<f64>], idx: &[usize]) -> Result<Tensor64> {
    let picked: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
    Tensor::from_rows(&picked)
}

fn gather_scalars(vals: &[f64], idx: &[usize]) -> Tensor64 {
    Tensor::vector(idx.iter().map(|&i| vals[i]).collect())
}

/// One PPO update over a finalized buffer: `epochs` passes of shuffled
/// minibatches, each optimizing the assembled loss (surrogate + active
/// smoothness terms + value loss − entropy bonus) with separate Adam steps
/// for actor and critic.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    actor: &mut Actor,
    critic: &mut Critic,
    buffer: &RolloutBuffer,
    spec: &RegularizerSpec,
    config: &PpoConfig,
    opt_actor: &mut Adam<f64>,
    opt_critic: &mut Adam<f64>,
    rng: &mut EnvRng,
) -> Result<UpdateStats> {
    let n = buffer.n();
    if buffer.advantages.len() != n {
        return Err(Error::contract("buffer not finalized"));
    }
    let mut stats = UpdateStats::default();
    let mut batches = 0usize;

    let mut indices: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(config.minibatch_size.min(n)) {
            let b = chunk.len();
            let mut tape = Tape64::new();
            let avars = actor.insert_leaves(&mut tape);
            let cvars = critic.insert_leaves(&mut tape);

            let obs = tape.constant(gather_rows(&buffer.obs, chunk)?);
            let raws_tensor = gather_rows(&buffer.raw_actions, chunk)?;
            let corrections: Vec<f64> = chunk
                .iter()
                .map(|&i| actor.squash_correction(&buffer.raw_actions[i]))
                .collect();
            let raws = tape.constant(raws_tensor);
            let adv = tape.constant(gather_scalars(&buffer.advantages, chunk));
            let old_lp = tape.constant(gather_scalars(&buffer.log_probs, chunk));
            let corr = tape.constant(Tensor::vector(corrections));
            let rets = {
                let data: Vec<f64> = chunk.iter().map(|&i| buffer.returns[i]).collect();
                tape.constant(Tensor::matrix(b, 1, data)?)
            };

            // Policy surrogate on the full squashed density of the stored
            // pre-squash actions (the squash correction is parameter-free, so
            // gradients match the Gaussian-only form exactly).
            let trunk = actor.graph_trunk(&mut tape, &avars, obs)?;
            let raw_mean = actor.graph_raw_action_mean(&mut tape, &avars, trunk)?;
            let gauss_lp = actor.graph_gaussian_log_prob(&mut tape, &avars, raw_mean, raws)?;
            let new_lp = tape.sub(gauss_lp, corr)?;
            let lp_diff = tape.sub(new_lp, old_lp)?;
            let ratio = tape.exp(lp_diff)?;
            let j_pi = ppo_surrogate(&mut tape, ratio, adv, config.clip_eps)?;

            // Smoothness terms on the triples whose center falls in this
            // minibatch.
            let triples: Vec<TransitionTriple> =
                chunk.iter().filter_map(|&i| buffer.triple_at(i)).collect();
            let terms = build_regularizers(actor, &mut tape, &avars, &triples, spec, rng)?;
            let policy_loss = assemble_policy_loss(&mut tape, j_pi, spec, &terms)?;

            let values = critic.graph_value(&mut tape, &cvars, obs)?;
            let vdiff = tape.sub(values, rets)?;
            let vsq = tape.square(vdiff)?;
            let value_loss = tape.mean(vsq)?;

            let weighted_v = tape.scale(value_loss, config.value_coef)?;
            let mut total = tape.add(policy_loss, weighted_v)?;
            let entropy = actor.graph_entropy(&mut tape, &avars)?;
            if config.entropy_coef != 0.0 {
                let weighted_e = tape.scale(entropy, config.entropy_coef)?;
                total = tape.sub(total, weighted_e)?;
            }

            let total_val = tape.value(total).item()?;
            if !total_val.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite loss at epoch {epoch}: j_pi={}, value_loss={}, l_s={:?}, l_p={:?}, l_t={:?}",
                    tape.value(j_pi).item()?,
                    tape.value(value_loss).item()?,
                    terms.l_s.map(|v| tape.value(v).item().unwrap_or(f64::NAN)),
                    terms.l_p.map(|v| tape.value(v).item().unwrap_or(f64::NAN)),
                    terms.l_t.map(|v| tape.value(v).item().unwrap_or(f64::NAN)),
                )));
            }

            tape.backward(total)?;

            let mut actor_grads: Vec<Tensor64> = avars
                .all()
                .iter()
                .map(|&v| tape.grad(v).expect("actor gradient").clone())
                .collect();
            let mut critic_grads: Vec<Tensor64> = cvars
                .all()
                .iter()
                .map(|&v| tape.grad(v).expect("critic gradient").clone())
                .collect();
            let actor_norm = clip_global_norm(&mut actor_grads, config.max_grad_norm);
            let _critic_norm = clip_global_norm(&mut critic_grads, config.max_grad_norm);

            {
                let mut params = actor.params_mut();
                let grads: Vec<&Tensor64> = actor_grads.iter().collect();
                opt_actor.step(&mut params, &grads)?;
            }
            {
                let mut params = critic.params_mut();
                let grads: Vec<&Tensor64> = critic_grads.iter().collect();
                opt_critic.step(&mut params, &grads)?;
            }

            stats.j_pi += tape.value(j_pi).item()?;
            if let Some(v) = terms.l_s {
                stats.l_s += tape.value(v).item()?;
            }
            if let Some(v) = terms.l_p {
                stats.l_p += tape.value(v).item()?;
            }
            if let Some(v) = terms.l_t {
                stats.l_t += tape.value(v).item()?;
            }
            stats.value_loss += tape.value(value_loss).item()?;
            stats.entropy += tape.value(entropy).item()?;
            stats.grad_norm += actor_norm;
            batches += 1;
        }
    }

    let k = batches.max(1) as f64;
    stats.j_pi /= k;
    stats.l_s /= k;
    stats.l_p /= k;
    stats.l_t /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.grad_norm /= k;
    Ok(stats)
}

#[derive(Clone, Debug, Default)]
pub struct TrainSummary {
    pub iterations: usize,
    pub env_steps: usize,
    pub episodes_completed: usize,
    pub final_mean_return: f64,
}

// Fixed offsets separating the deterministic RNG streams derived from one
// run seed.
const ACTION_STREAM_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;
const UPDATE_STREAM_OFFSET: u64 = 0x3C6E_F372_FE94_F82A;

/// Runs the rollout/update loop until `total_steps` environment steps.
/// Each iteration emits one record to `sink`. Fully deterministic given the
/// config seed.
pub fn train(
    env_factory: &dyn Fn() -> Result<Box<dyn Dynamics>>,
    actor: &mut Actor,
    critic: &mut Critic,
    spec: &RegularizerSpec,
    config: &PpoConfig,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<TrainSummary> {
    config.validate()?;
    spec.validate()?;

    let mut envs: Vec<Env> = (0..config.n_envs)
        .map(|e| Env::new(env_factory()?, config.seed + e as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut current_obs: Vec<Vec<f64>> = envs.iter().map(|e| e.observe_current()).collect();

    let mut action_rng = EnvRng::seed_from_u64(config.seed.wrapping_add(ACTION_STREAM_OFFSET));
    let mut update_rng = EnvRng::seed_from_u64(config.seed.wrapping_add(UPDATE_STREAM_OFFSET));

    let actor_shapes: Vec<Vec<usize>> = actor.params().iter().map(|p| p.shape().to_vec()).collect();
    let critic_shapes: Vec<Vec<usize>> =
        critic.params().iter().map(|p| p.shape().to_vec()).collect();
    let mut opt_actor = Adam::new(&actor_shapes, config.lr);
    let mut opt_critic = Adam::new(&critic_shapes, config.lr);

    let mut episode_return = vec![0.0; config.n_envs];
    let mut summary = TrainSummary::default();
    let mut last_mean_return = 0.0;
    let steps_per_iter = config.n_envs * config.rollout_len;

    while summary.env_steps < config.total_steps {
        summary.iterations += 1;
        let mut completed: Vec<f64> = Vec::new();
        let mut buffer = RolloutBuffer::new(config.n_envs, config.rollout_len);

        for t in 0..config.rollout_len {
            for e in 0..config.n_envs {
                let i = buffer.flat(e, t);
                let obs = current_obs[e].clone();
                let sample = actor.sample_action(&obs, &mut action_rng)?;
                let value = critic.value(&obs)?;
                let step = envs[e].step(&sample.action)?;

                episode_return[e] += step.reward;
                buffer.obs[i] = obs;
                buffer.raw_actions[i] = sample.raw;
                buffer.actions[i] = sample.action;
                buffer.action_means[i] = sample.mean;
                buffer.log_probs[i] = sample.log_prob;
                buffer.rewards[i] = step.reward;
                buffer.values[i] = value;
                buffer.dones[i] = step.done();

                if step.done() {
                    completed.push(episode_return[e]);
                    episode_return[e] = 0.0;
                    summary.episodes_completed += 1;
                    current_obs[e] = envs[e].reset_continue();
                } else {
                    current_obs[e] = step.obs;
                }
            }
        }
        for e in 0..config.n_envs {
            buffer.bootstrap_values[e] = critic.value(&current_obs[e])?;
        }
        buffer.finalize(config.gamma, config.gae_lambda, config.normalize_advantages)?;

        let stats = ppo_update(
            actor,
            critic,
            &buffer,
            spec,
            config,
            &mut opt_actor,
            &mut opt_critic,
            &mut update_rng,
        )?;

        summary.env_steps += steps_per_iter;
        let mean_return = if completed.is_empty() {
            last_mean_return
        } else {
            completed.iter().sum::<f64>() / completed.len() as f64
        };
        last_mean_return = mean_return;
        summary.final_mean_return = mean_return;

        sink(&IterationRecord {
            iteration: summary.iterations,
            steps: summary.env_steps,
            mean_return,
            j_pi: stats.j_pi,
            l_s: stats.l_s,
            l_p: stats.l_p,
            l_t: stats.l_t,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            grad_norm: stats.grad_norm,
        });
    }
    Ok(summary)
}

/// One evaluation episode under the deterministic mean policy.
#[derive(Clone, Debug)]
pub struct EvalEpisode {
    pub ret: f64,
    /// Executed actions, steps x action_dim.
    pub actions: Vec<Vec<f64>>,
}

/// Rolls out `n_episodes` with `act_mean` (no sampling); episode `i` reseeds
/// the environment with `seed_base + i`.
pub fn evaluate_mean_policy(
    env: &mut Env,
    actor: &Actor,
    n_episodes: usize,
    seed_base: u64,
) -> Result<Vec<EvalEpisode>> {
    let mut out = Vec::with_capacity(n_episodes);
    for ep in 0..n_episodes {
        let mut obs = env.reset(seed_base + ep as u64);
        let mut ret = 0.0;
        let mut actions = Vec::new();
        loop {
            let a = actor.act_mean(&obs)?;
            let step = env.step(&a)?;
            actions.push(a);
            ret += step.reward;
            if step.done() {
                break;
            }
            obs = step.obs;
        }
        out.push(EvalEpisode { ret, actions });
    }
    Ok(out)
}
