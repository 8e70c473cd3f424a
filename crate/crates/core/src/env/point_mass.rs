//! Velocity-controlled point mass on the plane with additive disturbances.

use super::{set_common_param, Dynamics, EnvRng, EnvSpec};
use crate::error::{Error, Result};
use rand::Rng;

/// State `[x, y]`; action `[vx, vy]` in `[-1, 1]²`. The transition is
/// `s' = s + dt * a + noise` and the reward penalizes squared distance to a
/// fixed goal plus a small control cost.
#[derive(Clone, Debug)]
pub struct PointMass {
    pub dt: f64,
    pub noise_bound: f64,
    pub noise_sensitivity: f64,
    pub horizon: usize,
    pub goal: [f64; 2],
    pub action_cost: f64,
}

impl Default for PointMass {
    fn default() -> Self {
        PointMass {
            dt: 0.05,
            noise_bound: 0.01,
            noise_sensitivity: 1.0,
            horizon: 100,
            goal: [1.0, 0.0],
            action_cost: 0.01,
        }
    }
}

impl Dynamics for PointMass {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "pointmass",
            state_dim: 2,
            obs_dim: 2,
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
            "goal_x" => self.goal[0] = value,
            "goal_y" => self.goal[1] = value,
            "action_cost" => self.action_cost = value,
            _ => return Err(Error::contract(format!("pointmass: unknown parameter '{key}'"))),
        }
        Ok(())
    }

    fn init_state(&self, rng: &mut EnvRng) -> Vec<f64> {
        vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
    }

    fn transition(&self, state: &[f64], action: &[f64], noise: &[f64]) -> Vec<f64> {
        vec![
            state[0] + self.dt * action[0] + noise[0],
            state[1] + self.dt * action[1] + noise[1],
        ]
    }

    fn reward(&self, _state: &[f64], action: &[f64], next_state: &[f64]) -> f64 {
        let dx = next_state[0] - self.goal[0];
        let dy = next_state[1] - self.goal[1];
        let effort = action[0] * action[0] + action[1] * action[1];
        -(dx * dx + dy * dy) - self.action_cost * effort
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        state.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_step_is_pure_drift() {
        let pm = PointMass::default();
        let next = pm.transition(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]);
        assert_eq!(next, vec![0.05, 0.0]);
    }

    #[test]
    fn boundary_noise_shifts_additively() {
        let pm = PointMass::default();
        let next = pm.transition(&[0.0, 0.0], &[1.0, 0.0], &[0.01, 0.0]);
        assert!((next[0] - 0.06).abs() < 1e-15);
        assert_eq!(next[1], 0.0);
    }

    #[test]
    fn reward_at_goal_with_zero_action_is_zero() {
        let pm = PointMass::default();
        let r = pm.reward(&[1.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]);
        assert_eq!(r, 0.0);
        let r2 = pm.reward(&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]);
        assert!((r2 + 0.01).abs() < 1e-15);
    }
}
