//! Torque-limited pendulum swing-up.

use super::{set_common_param, Dynamics, EnvRng, EnvSpec};
use crate::error::{Error, Result};
use rand::Rng;
use std::f64::consts::PI;

/// State `[theta, omega]` with `theta = 0` upright (unstable equilibrium);
/// action is a single torque in `[-2, 2]`.
///
/// Dynamics: `theta'' = (g/l) sin(theta) + a / (m l^2)`, integrated
/// semi-implicitly (velocity first, then position), disturbance added to the
/// updated state, angular velocity clamped to `[-max_speed, max_speed]`.
/// The clamp is non-expansive, so additive noise keeps sensitivity 1.
///
/// The angle itself is unwrapped; observations use (sin, cos) and the reward
/// uses the angle reduced to `[-pi, pi)`.
#[derive(Clone, Debug)]
pub struct Pendulum {
    pub dt: f64,
    pub noise_bound: f64,
    pub noise_sensitivity: f64,
    pub horizon: usize,
    pub gravity: f64,
    pub length: f64,
    pub mass: f64,
    pub max_torque: f64,
    pub max_speed: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Pendulum {
            dt: 0.05,
            noise_bound: 0.005,
            noise_sensitivity: 1.0,
            horizon: 200,
            gravity: 10.0,
            length: 1.0,
            mass: 1.0,
            max_torque: 2.0,
            max_speed: 8.0,
        }
    }
}

/// Reduces an angle to `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut a = (theta + PI) % two_pi;
    if a < 0.0 {
        a += two_pi;
    }
    a - PI
}

impl Dynamics for Pendulum {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "pendulum",
            state_dim: 2,
            obs_dim: 3,
            action_dim: 1,
            action_low: vec![-self.max_torque],
            action_high: vec![self.max_torque],
            dt: self.dt,
            noise_bound: self.noise_bound,
            noise_sensitivity: self.noise_sensitivity,
            horizon: self.horizon,
        }
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        if set_common_param(
            key,
            value,
            &mut self.dt,
            &mut self.noise_bound,
            &mut self.noise_sensitivity,
            &mut self.horizon,
        )? {
            return Ok(());
        }
        match key {
            "gravity" => self.gravity = value,
            "length" => self.length = value,
            "mass" => self.mass = value,
            "max_torque" => self.max_torque = value,
            "max_speed" => self.max_speed = value,
            _ => return Err(Error::contract(format!("pendulum: unknown parameter '{key}'"))),
        }
        Ok(())
    }

    fn init_state(&self, rng: &mut EnvRng) -> Vec<f64> {
        vec![rng.gen_range(-PI..PI), rng.gen_range(-1.0..1.0)]
    }

    fn transition(&self, state: &[f64], action: &[f64], noise: &[f64]) -> Vec<f64> {
        let (theta, omega) = (state[0], state[1]);
        let accel = (self.gravity / self.length) * theta.sin()
            + action[0] / (self.mass * self.length * self.length);
        let omega_next = omega + self.dt * accel;
        let theta_next = theta + self.dt * omega_next;
        vec![
            theta_next + noise[0],
            (omega_next + noise[1]).clamp(-self.max_speed, self.max_speed),
        ]
    }

    fn reward(&self, _state: &[f64], action: &[f64], next_state: &[f64]) -> f64 {
        let theta = wrap_angle(next_state[0]);
        let omega = next_state[1];
        -(theta * theta + 0.1 * omega * omega + 0.001 * action[0] * action[0])
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        vec![state[0].sin(), state[0].cos(), state[1]]
    }
}
