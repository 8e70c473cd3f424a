//! Analytic control environments with an explicit transition function and a
//! bounded disturbance channel.
//!
//! Every environment factors into a pure [`Dynamics`] (transition, reward,
//! observation map) and the [`Env`] wrapper that owns the RNG, draws bounded
//! noise, and tracks episode progress. Disturbances enter additively in state
//! space and every post-noise map is non-expansive, so the declared
//! noise-sensitivity constant is 1 for all three environments; the constant
//! is still carried as data so diagnostic suites can check it (and so test
//! fixtures can mis-declare it on purpose).
//!
//! Angles are reported to the policy as (sin, cos) pairs, which keeps the
//! observation map 1-Lipschitz and free of wrap-around jumps.

mod pendulum;
mod point_mass;
mod reacher;

pub use pendulum::Pendulum;
pub use point_mass::PointMass;
pub use reacher::Reacher;

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type EnvRng = ChaCha8Rng;

/// Static facts about an environment.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub state_dim: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Seconds per control step.
    pub dt: f64,
    /// Hard bound on the L2 norm of the disturbance.
    pub noise_bound: f64,
    /// Declared upper bound on the transition's sensitivity to the
    /// disturbance input (Lipschitz constant w.r.t. noise).
    pub noise_sensitivity: f64,
    pub horizon: usize,
}

impl EnvSpec {
    /// Control frequency in Hz.
    pub fn control_hz(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::contract("dt must be positive"));
        }
        if self.noise_bound < 0.0 {
            return Err(Error::contract("noise_bound must be non-negative"));
        }
        if !(self.noise_sensitivity > 0.0) {
            return Err(Error::contract("noise_sensitivity must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::contract("horizon must be at least 1"));
        }
        if self.action_low.len() != self.action_dim || self.action_high.len() != self.action_dim {
            return Err(Error::contract("action bound dims inconsistent"));
        }
        for (lo, hi) in self.action_low.iter().zip(&self.action_high) {
            if !(lo < hi) {
                return Err(Error::contract("action bounds must be non-degenerate"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Pure part of an environment: everything except RNG and episode bookkeeping.
pub trait Dynamics: Send {
    fn spec(&self) -> EnvSpec;
    /// Applies one configuration override (from the experiment config).
    fn set_param(&mut self, key: &str, value: f64) -> Result<()>;
    fn init_state(&self, rng: &mut EnvRng) -> Vec<f64>;
    /// Deterministic transition `T(state, action, noise)`. The action is
    /// already clipped to bounds; the noise norm is already within bound.
    fn transition(&self, state: &[f64], action: &[f64], noise: &[f64]) -> Vec<f64>;
    /// Pure reward for the (state, clipped action, next_state) triple.
    fn reward(&self, state: &[f64], action: &[f64], next_state: &[f64]) -> f64;
    fn observe(&self, state: &[f64]) -> Vec<f64>;
}

/// Shared helper: common configuration keys every environment accepts.
/// Returns `true` when the key was recognized.
fn set_common_param(
    key: &str,
    value: f64,
    dt: &mut f64,
    noise_bound: &mut f64,
    noise_sensitivity: &mut f64,
    horizon: &mut usize,
) -> Result<bool> {
    match key {
        "dt" => *dt = value,
        "noise_bound" => *noise_bound = value,
        "noise_sensitivity" => *noise_sensitivity = value,
        "horizon" => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::contract(format!("horizon must be a positive integer, got {value}")));
            }
            *horizon = value as usize;
        }
        _ => return Ok(false),
    }
    Ok(true)
}

/// Builds a dynamics by registry name with configuration overrides applied.
pub fn build_dynamics(name: &str, params: &[(String, f64)]) -> Result<Box<dyn Dynamics>> {
    let mut dynamics: Box<dyn Dynamics> = match name {
        "pointmass" => Box::new(PointMass::default()),
        "pendulum" => Box::new(Pendulum::default()),
        "reacher" => Box::new(Reacher::default()),
        other => {
            return Err(Error::contract(format!(
                "unknown environment '{other}' (known: {})",
                env_names().join(", ")
            )))
        }
    };
    for (key, value) in params {
        dynamics.set_param(key, *value)?;
    }
    dynamics.spec().validate()?;
    Ok(dynamics)
}

pub fn env_names() -> Vec<&'static str> {
    vec!["pointmass", "pendulum", "reacher"]
}

/// An environment instance: dynamics + RNG + episode state.
pub struct Env {
    dynamics: Box<dyn Dynamics>,
    spec: EnvSpec,
    rng: EnvRng,
    state: Vec<f64>,
    steps: usize,
}

impl Env {
    pub fn new(dynamics: Box<dyn Dynamics>, seed: u64) -> Result<Self> {
        let spec = dynamics.spec();
        spec.validate()?;
        let mut rng = EnvRng::seed_from_u64(seed);
        let state = dynamics.init_state(&mut rng);
        Ok(Env { dynamics, spec, rng, state, steps: 0 })
    }

    pub fn from_name(name: &str, params: &[(String, f64)], seed: u64) -> Result<Self> {
        Env::new(build_dynamics(name, params)?, seed)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Reseeds the RNG stream and starts a fresh episode.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = EnvRng::seed_from_u64(seed);
        self.reset_continue()
    }

    /// Starts a fresh episode from the current RNG stream (keeps one stream
    /// per environment across a whole training run).
    pub fn reset_continue(&mut self) -> Vec<f64> {
        self.state = self.dynamics.init_state(&mut self.rng);
        self.steps = 0;
        self.observe_current()
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    /// Forces the internal state (diagnostic probes only). Resets the step
    /// counter so horizon bookkeeping starts over.
    pub fn set_state(&mut self, state: &[f64]) {
        self.state = state.to_vec();
        self.steps = 0;
    }

    pub fn observe(&self, state: &[f64]) -> Vec<f64> {
        self.dynamics.observe(state)
    }

    pub fn observe_current(&self) -> Vec<f64> {
        self.dynamics.observe(&self.state)
    }

    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.spec.action_low.iter().zip(&self.spec.action_high))
            .map(|(&a, (&lo, &hi))| a.clamp(lo, hi))
            .collect()
    }

    /// Draws a disturbance: per-component Gaussian with std `noise_bound/2`,
    /// projected onto the L2 ball of radius `noise_bound`. The projection is
    /// shrunk by one part in 1e15 so the hard bound holds in floating point,
    /// not just in exact arithmetic.
    pub fn sample_noise(&mut self) -> Vec<f64> {
        let sigma = self.spec.noise_bound;
        let d = self.spec.state_dim;
        if sigma == 0.0 {
            return vec![0.0; d];
        }
        let std = sigma / 2.0;
        let mut xi: Vec<f64> = (0..d)
            .map(|_| {
                let z: f64 = self.rng.sample(StandardNormal);
                std * z
            })
            .collect();
        let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > sigma {
            let scale = sigma / norm * (1.0 - 1e-15);
            for x in xi.iter_mut() {
                *x *= scale;
            }
        }
        xi
    }

    /// One control step with internally drawn noise.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let noise = self.sample_noise();
        self.step_with_noise(action, &noise)
    }

    /// One control step with caller-supplied noise; rejects noise outside the
    /// declared bound.
    pub fn step_with_noise(&mut self, action: &[f64], noise: &[f64]) -> Result<StepResult> {
        if action.len() != self.spec.action_dim {
            return Err(Error::contract(format!(
                "action dim {} != {}",
                action.len(),
                self.spec.action_dim
            )));
        }
        if noise.len() != self.spec.state_dim {
            return Err(Error::contract(format!(
                "noise dim {} != state dim {}",
                noise.len(),
                self.spec.state_dim
            )));
        }
        let norm = noise.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > self.spec.noise_bound * (1.0 + 1e-12) {
            return Err(Error::contract(format!(
                "noise norm {norm} exceeds bound {}",
                self.spec.noise_bound
            )));
        }
        let clipped = self.clip_action(action);
        let next = self.dynamics.transition(&self.state, &clipped, noise);
        for &x in &next {
            if !x.is_finite() {
                return Err(Error::numeric("non-finite next state"));
            }
        }
        let reward = self.dynamics.reward(&self.state, &clipped, &next);
        self.state = next;
        self.steps += 1;
        Ok(StepResult {
            obs: self.observe_current(),
            reward,
            terminated: false,
            truncated: self.steps >= self.spec.horizon,
        })
    }

    /// `n` i.i.d. draws from the distribution of next states reachable from
    /// `(s_prev, a_prev)` under the noisy transition.
    pub fn sample_similar_states(
        &mut self,
        s_prev: &[f64],
        a_prev: &[f64],
        n: usize,
    ) -> Result<Vec<Vec<f64>>> {
        if n < 2 {
            return Err(Error::contract("similar-state sampling needs n >= 2"));
        }
        let clipped = self.clip_action(a_prev);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let noise = self.sample_noise();
            out.push(self.dynamics.transition(s_prev, &clipped, &noise));
        }
        Ok(out)
    }

    /// Noiseless next state (diagnostics).
    pub fn nominal_next(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let clipped = self.clip_action(action);
        let zero = vec![0.0; self.spec.state_dim];
        self.dynamics.transition(state, &clipped, &zero)
    }
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
