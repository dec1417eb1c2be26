use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{check_action, uniform, EnvName, EnvSpec, Environment, StepOutcome};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumParams {
    pub g_over_l: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub episode_steps: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            g_over_l: 10.0,
            dt: 0.05,
            max_torque: 2.0,
            episode_steps: 200,
        }
    }
}

/// Torque-driven pendulum, `θ̈ = -(g/l) sin θ + u`, integrated with
/// semi-implicit Euler. Observation `(cos θ, sin θ, θ̇)`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    params: PendulumParams,
    theta: f64,
    theta_dot: f64,
    t: usize,
}

/// Maps an angle to `[-π, π)`.
pub(crate) fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Self {
            params,
            theta: 0.0,
            theta_dot: 0.0,
            t: 0,
        }
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.t = 0;
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> EnvSpec {
        let m = self.params.max_torque;
        EnvSpec {
            name: EnvName::Pendulum,
            obs_dim: 3,
            act_dim: 1,
            max_episode_steps: self.params.episode_steps,
            action_low: vec![-m],
            action_high: vec![m],
        }
    }

    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let theta = uniform(rng, -PI, PI);
        let theta_dot = uniform(rng, -1.0, 1.0);
        self.set_state(theta, theta_dot);
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        check_action(action, 1)?;
        let p = &self.params;
        let u = action[0].clamp(-p.max_torque, p.max_torque);
        let wrapped = wrap_angle(self.theta);
        let reward = -(wrapped * wrapped + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);
        let accel = -p.g_over_l * self.theta.sin() + u;
        self.theta_dot += p.dt * accel;
        self.theta += p.dt * self.theta_dot;
        self.t += 1;
        Ok(StepOutcome {
            obs: self.observe(),
            reward,
            terminal: false,
            truncated: self.t >= p.episode_steps,
        })
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_has_zero_cost() {
        let mut env = Pendulum::new(PendulumParams::default());
        env.set_state(0.0, 0.0);
        let out = env.step(&[0.0]).unwrap();
        assert_eq!(out.reward, 0.0);
        assert_eq!(env.state(), (0.0, 0.0));
    }

    #[test]
    fn torque_is_clipped() {
        let mut a = Pendulum::new(PendulumParams::default());
        let mut b = a.clone();
        a.set_state(1.0, 0.5);
        b.set_state(1.0, 0.5);
        assert_eq!(a.step(&[10.0]).unwrap(), b.step(&[2.0]).unwrap());
    }

    #[test]
    fn wraps_angles() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-0.25) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn truncates_after_episode_length() {
        let mut env = Pendulum::new(PendulumParams::default());
        env.set_state(0.3, 0.0);
        for t in 0..200 {
            let out = env.step(&[0.0]).unwrap();
            assert_eq!(out.truncated, t == 199);
            assert!(out.obs.iter().all(|x| x.is_finite()));
        }
    }
}
