//! Small continuous-control environments and trajectory collection.

mod normalizer;
mod pendulum;
mod point_mass;
mod rollout;

pub use normalizer::RunningNormalizer;
pub use pendulum::{Pendulum, PendulumParams};
pub use point_mass::{PointMass, PointMassParams};
pub use rollout::{evaluate, rollout, Actor, Rollout, TrajectoryBatch, Transition};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    #[default]
    PointMass,
    Pendulum,
}

impl EnvName {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::PointMass => "point_mass",
            EnvName::Pendulum => "pendulum",
        }
    }
}

/// Static description of an environment's interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: EnvName,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub max_episode_steps: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

impl EnvSpec {
    /// Half of the feasible range per action dimension.
    pub fn half_action_range(&self) -> Vec<f64> {
        self.action_low
            .iter()
            .zip(&self.action_high)
            .map(|(l, h)| 0.5 * (h - l))
            .collect()
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

/// Physics constants for every supported environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub point_mass: PointMassParams,
    pub pendulum: PendulumParams,
}

/// A deterministic episodic environment. Randomness only enters via `reset`.
pub trait Environment: Send {
    fn spec(&self) -> EnvSpec;

    /// Draws a start state and returns its observation.
    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> Vec<f64>;

    /// Advances one step. Actions outside the bounds are clipped; non-finite
    /// actions are rejected.
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;

    fn observe(&self) -> Vec<f64>;
}

pub fn make_env(name: EnvName, config: &EnvConfig) -> Box<dyn Environment> {
    match name {
        EnvName::PointMass => Box::new(PointMass::new(config.point_mass.clone())),
        EnvName::Pendulum => Box::new(Pendulum::new(config.pendulum.clone())),
    }
}

pub(crate) fn check_action(action: &[f64], act_dim: usize) -> Result<()> {
    if action.len() != act_dim {
        return Err(crate::error::shape(format!(
            "action has {} entries, expected {act_dim}",
            action.len()
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(crate::Error::NonFinite(format!("action {action:?}")));
    }
    Ok(())
}

pub(crate) fn uniform(rng: &mut dyn rand::RngCore, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}
