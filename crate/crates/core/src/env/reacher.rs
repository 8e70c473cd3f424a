//! Kinematic two-link reacher.

use super::{set_common_param, Dynamics, EnvRng, EnvSpec};
use crate::error::{Error, Result};
use rand::Rng;
use std::f64::consts::PI;

/// State `[theta1, theta2]` (shoulder, elbow); action `[w1, w2]` commands
/// joint velocities in `[-1, 1]` rad/s. Transition is `theta' = theta +
/// dt * a + noise`; reward is the negative squared distance from the arm tip
/// to a fixed target.
#[derive(Clone, Debug)]
pub struct Reacher {
    pub dt: f64,
    pub noise_bound: f64,
    pub noise_sensitivity: f64,
    pub horizon: usize,
    pub link1: f64,
    pub link2: f64,
    pub target: [f64; 2],
}

impl Default for Reacher {
    fn default() -> Self {
        Reacher {
            dt: 0.05,
            noise_bound: 0.01,
            noise_sensitivity: 1.0,
            horizon: 100,
            link1: 0.5,
            link2: 0.5,
            target: [0.5, 0.3],
        }
    }
}

impl Reacher {
    pub fn tip(&self, state: &[f64]) -> [f64; 2] {
        let (t1, t2) = (state[0], state[1]);
        [
            self.link1 * t1.cos() + self.link2 * (t1 + t2).cos(),
            self.link1 * t1.sin() + self.link2 * (t1 + t2).sin(),
        ]
    }
}

impl Dynamics for Reacher {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "reacher",
            state_dim: 2,
            obs_dim: 6,
            action_dim: 2,
            action_low: vec![-1.0, -1.0],
            action_high: vec![1.0, 1.0],
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
            "target_x" => self.target[0] = value,
            "target_y" => self.target[1] = value,
            "link1" => self.link1 = value,
            "link2" => self.link2 = value,
            _ => return Err(Error::contract(format!("reacher: unknown parameter '{key}'"))),
        }
        Ok(())
    }

    fn init_state(&self, rng: &mut EnvRng) -> Vec<f64> {
        vec![rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)]
    }

    fn transition(&self, state: &[f64], action: &[f64], noise: &[f64]) -> Vec<f64> {
        vec![
            state[0] + self.dt * action[0] + noise[0],
            state[1] + self.dt * action[1] + noise[1],
        ]
    }

    fn reward(&self, _state: &[f64], _action: &[f64], next_state: &[f64]) -> f64 {
        let tip = self.tip(next_state);
        let dx = tip[0] - self.target[0];
        let dy = tip[1] - self.target[1];
        -(dx * dx + dy * dy)
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        vec![
            state[0].sin(),
            state[0].cos(),
            state[1].sin(),
            state[1].cos(),
            self.target[0],
            self.target[1],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Env;

    #[test]
    fn straight_arm_reaches_full_extension() {
        let r = Reacher::default();
        let tip = r.tip(&[0.0, 0.0]);
        assert!((tip[0] - 1.0).abs() < 1e-12);
        assert!(tip[1].abs() < 1e-12);
    }

    #[test]
    fn folded_arm_returns_to_origin() {
        let r = Reacher::default();
        let tip = r.tip(&[0.0, PI]);
        assert!(tip[0].abs() < 1e-12);
        assert!(tip[1].abs() < 1e-12);
    }

    #[test]
    fn reset_angles_within_limits() {
        let mut env = Env::new(Box::new(Reacher::default()), 0).unwrap();
        for seed in 0..200 {
            let _ = env.reset(seed);
            let s = env.state();
            assert!(s[0] >= -PI && s[0] < PI);
            assert!(s[1] >= -PI && s[1] < PI);
        }
    }

    #[test]
    fn reward_is_zero_only_at_target() {
        let mut r = Reacher::default();
        r.target = r.tip(&[0.3, 0.4]);
        assert!(r.reward(&[0.0, 0.0], &[0.0, 0.0], &[0.3, 0.4]).abs() < 1e-15);
        assert!(r.reward(&[0.0, 0.0], &[0.0, 0.0], &[1.3, 0.4]) < 0.0);
    }
}
