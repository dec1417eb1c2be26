use serde::{Deserialize, Serialize};

use super::{check_action, uniform, EnvName, EnvSpec, Environment, StepOutcome};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMassParams {
    /// Velocity gain per unit action and position gain per unit velocity.
    pub dt: f64,
    pub action_cost: f64,
    /// Positions are confined to `[-wall, wall]²`; hitting a wall stops
    /// motion along that axis.
    pub wall: f64,
    /// Start positions are uniform on `[-start_range, start_range]²`.
    pub start_range: f64,
    pub episode_steps: usize,
}

impl Default for PointMassParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            action_cost: 0.01,
            wall: 2.0,
            start_range: 1.0,
            episode_steps: 100,
        }
    }
}

/// A 2-D point mass steered toward the origin. State `(x, y, vx, vy)`.
#[derive(Debug, Clone)]
pub struct PointMass {
    params: PointMassParams,
    state: [f64; 4],
    t: usize,
}

impl PointMass {
    pub fn new(params: PointMassParams) -> Self {
        Self {
            params,
            state: [0.0; 4],
            t: 0,
        }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Places the mass at `state` and restarts the episode clock.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.t = 0;
    }
}

impl Environment for PointMass {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: EnvName::PointMass,
            obs_dim: 4,
            act_dim: 2,
            max_episode_steps: self.params.episode_steps,
            action_low: vec![-1.0; 2],
            action_high: vec![1.0; 2],
        }
    }

    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let r = self.params.start_range;
        let x = uniform(rng, -r, r);
        let y = uniform(rng, -r, r);
        self.set_state([x, y, 0.0, 0.0]);
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        check_action(action, 2)?;
        let p = &self.params;
        let [mut x, mut y, mut vx, mut vy] = self.state;
        let ax = action[0].clamp(-1.0, 1.0);
        let ay = action[1].clamp(-1.0, 1.0);
        vx += p.dt * ax;
        vy += p.dt * ay;
        x += p.dt * vx;
        y += p.dt * vy;
        if x.abs() > p.wall {
            x = x.clamp(-p.wall, p.wall);
            vx = 0.0;
        }
        if y.abs() > p.wall {
            y = y.clamp(-p.wall, p.wall);
            vy = 0.0;
        }
        self.state = [x, y, vx, vy];
        self.t += 1;
        let reward = -(x * x + y * y).sqrt() - p.action_cost * (ax * ax + ay * ay);
        Ok(StepOutcome {
            obs: self.observe(),
            reward,
            terminal: false,
            truncated: self.t >= p.episode_steps,
        })
    }

    fn observe(&self) -> Vec<f64> {
        self.state.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rest_at_goal_is_fixed_point() {
        let mut env = PointMass::new(PointMassParams::default());
        env.set_state([0.0; 4]);
        let out = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(out.reward, 0.0);
        assert_eq!(env.state(), [0.0; 4]);
    }

    #[test]
    fn hand_stepped_update() {
        let mut env = PointMass::new(PointMassParams::default());
        env.set_state([1.0, 0.0, 0.0, 0.0]);
        let out = env.step(&[-1.0, 0.0]).unwrap();
        let s = env.state();
        assert!((s[2] + 0.1).abs() < 1e-15);
        assert!((s[0] - 0.99).abs() < 1e-15);
        assert!((out.reward - (-0.99 - 0.01)).abs() < 1e-15);
    }

    #[test]
    fn actions_are_clipped_and_validated() {
        let mut a = PointMass::new(PointMassParams::default());
        let mut b = a.clone();
        a.set_state([0.5, 0.5, 0.0, 0.0]);
        b.set_state([0.5, 0.5, 0.0, 0.0]);
        assert_eq!(a.step(&[5.0, -3.0]).unwrap(), b.step(&[1.0, -1.0]).unwrap());
        assert!(a.step(&[f64::NAN, 0.0]).is_err());
        assert!(a.step(&[0.0]).is_err());
    }

    #[test]
    fn rewards_stay_bounded() {
        let mut env = PointMass::new(PointMassParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng);
        let floor = -(2.0 * 2f64.sqrt() + 0.02);
        for t in 0..100 {
            let out = env.step(&[1.0, 1.0]).unwrap();
            assert!(out.reward <= 0.0 && out.reward >= floor, "{}", out.reward);
            assert!(!out.terminal);
            assert_eq!(out.truncated, t == 99);
        }
    }
}
