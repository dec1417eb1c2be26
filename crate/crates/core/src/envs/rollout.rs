use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, RunningNormalizer};
use crate::error::{invalid, Result};

/// A stochastic policy acting on normalized observations.
pub trait Actor {
    /// Samples an action and returns it with its log-density.
    fn sample(&self, obs: &[f64], rng: &mut dyn rand::RngCore) -> (Vec<f64>, f64);

    /// The deterministic (mean) action.
    fn mean_action(&self, obs: &[f64]) -> Vec<f64>;
}

/// One environment step. Observations are stored raw, actions pre-clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub truncated: bool,
    pub behavior_logprob: f64,
    pub policy_age: usize,
}

impl Transition {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }

    fn validate(&self) -> Result<()> {
        let finite = self
            .state
            .iter()
            .chain(&self.action)
            .chain(&self.next_state)
            .chain([&self.reward, &self.behavior_logprob])
            .all(|x| x.is_finite());
        if !finite {
            return Err(crate::Error::NonFinite("transition field".into()));
        }
        if self.state.len() != self.next_state.len() {
            return Err(crate::error::shape("state and next_state lengths differ"));
        }
        Ok(())
    }
}

/// The transitions collected under one policy, in time order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryBatch {
    pub transitions: Vec<Transition>,
    /// Returns of episodes that finished during collection.
    pub episode_returns: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.transitions {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Parses one transition per nonblank line. All rows must share shapes.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut transitions: Vec<Transition> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Transition = serde_json::from_str(&line)
                .map_err(|e| crate::Error::Decode(format!("line {}: {e}", i + 1)))?;
            t.validate()?;
            if let Some(first) = transitions.first() {
                if first.state.len() != t.state.len() || first.action.len() != t.action.len() {
                    return Err(crate::error::shape(format!(
                        "line {}: shape differs",
                        i + 1
                    )));
                }
            }
            transitions.push(t);
        }
        Ok(Self {
            transitions,
            episode_returns: Vec::new(),
        })
    }

    pub fn from_jsonl(s: &str) -> Result<Self> {
        Self::read_jsonl(s.as_bytes())
    }
}

/// A persistent collector. Episodes continue across calls to `collect`.
pub struct Rollout {
    env: Box<dyn Environment>,
    rng: ChaCha8Rng,
    obs: Vec<f64>,
    episode_return: f64,
}

impl Rollout {
    pub fn new(mut env: Box<dyn Environment>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = env.reset(&mut rng);
        Self {
            env,
            rng,
            obs,
            episode_return: 0.0,
        }
    }

    pub fn env(&self) -> &dyn Environment {
        self.env.as_ref()
    }

    /// Collects `n` steps. Actions are chosen on observations normalized by
    /// `frozen`; `live`, if given, absorbs every raw observation seen.
    pub fn collect(
        &mut self,
        actor: &dyn Actor,
        frozen: &RunningNormalizer,
        mut live: Option<&mut RunningNormalizer>,
        n: usize,
    ) -> Result<TrajectoryBatch> {
        if n == 0 {
            return Err(invalid("rollout length must be positive"));
        }
        let mut batch = TrajectoryBatch {
            transitions: Vec::with_capacity(n),
            episode_returns: Vec::new(),
        };
        let mut norm = vec![0.0; self.obs.len()];
        for _ in 0..n {
            if let Some(live) = live.as_deref_mut() {
                live.update(&self.obs);
            }
            frozen.normalize_into(&self.obs, &mut norm);
            let (action, logp) = actor.sample(&norm, &mut self.rng);
            let out = self.env.step(&action)?;
            self.episode_return += out.reward;
            let done = out.terminal || out.truncated;
            batch.transitions.push(Transition {
                state: std::mem::take(&mut self.obs),
                action,
                reward: out.reward,
                next_state: out.obs.clone(),
                terminal: out.terminal,
                truncated: out.truncated,
                behavior_logprob: logp,
                policy_age: 0,
            });
            if done {
                batch.episode_returns.push(self.episode_return);
                self.episode_return = 0.0;
                self.obs = self.env.reset(&mut self.rng);
            } else {
                self.obs = out.obs;
            }
        }
        Ok(batch)
    }
}

/// Collects `n` steps from a fresh environment with identity normalization.
pub fn rollout(
    actor: &dyn Actor,
    env: Box<dyn Environment>,
    n: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    let dim = env.spec().obs_dim;
    let identity = RunningNormalizer::identity(dim);
    Rollout::new(env, seed).collect(actor, &identity, None, n)
}

/// Mean undiscounted return of the mean action over `episodes` episodes whose
/// start states come from `seed`.
pub fn evaluate(
    actor: &dyn Actor,
    env: &mut dyn Environment,
    normalizer: &RunningNormalizer,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    if episodes == 0 {
        return Err(invalid("evaluation needs at least one episode"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut obs = env.reset(&mut rng);
        loop {
            let action = actor.mean_action(&normalizer.normalize(&obs));
            let out = env.step(&action)?;
            total += out.reward;
            if out.terminal || out.truncated {
                break;
            }
            obs = out.obs;
        }
    }
    Ok(total / episodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, EnvConfig, EnvName};
    use rand::Rng;

    struct Jitter;

    impl Actor for Jitter {
        fn sample(&self, obs: &[f64], rng: &mut dyn rand::RngCore) -> (Vec<f64>, f64) {
            let u: f64 = rng.random_range(-0.5..0.5);
            (vec![-0.3 * obs[0] + u, -0.3 * obs[1]], -1.0)
        }

        fn mean_action(&self, obs: &[f64]) -> Vec<f64> {
            vec![-0.3 * obs[0], -0.3 * obs[1]]
        }
    }

    fn env() -> Box<dyn Environment> {
        make_env(EnvName::PointMass, &EnvConfig::default())
    }

    #[test]
    fn same_seed_same_trajectory() {
        let a = rollout(&Jitter, env(), 250, 7).unwrap();
        let b = rollout(&Jitter, env(), 250, 7).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let c = rollout(&Jitter, env(), 250, 8).unwrap();
        assert_ne!(a.to_jsonl(), c.to_jsonl());
    }

    #[test]
    fn episodes_reset_on_truncation() {
        let batch = rollout(&Jitter, env(), 250, 1).unwrap();
        let ends: Vec<usize> = (0..batch.len())
            .filter(|&i| batch.transitions[i].done())
            .collect();
        assert_eq!(ends, vec![99, 199]);
        assert_eq!(batch.episode_returns.len(), 2);
        for w in batch.transitions.windows(2) {
            if !w[0].done() {
                assert_eq!(w[0].next_state, w[1].state);
            }
        }
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let batch = rollout(&Jitter, env(), 50, 3).unwrap();
        let text = batch.to_jsonl();
        let back = TrajectoryBatch::from_jsonl(&text).unwrap();
        assert_eq!(back.transitions, batch.transitions);
        assert!(TrajectoryBatch::from_jsonl("{\"state\":[1]}").is_err());
    }

    #[test]
    fn live_normalizer_sees_every_state() {
        let mut r = Rollout::new(env(), 0);
        let frozen = RunningNormalizer::new(4);
        let mut live = RunningNormalizer::new(4);
        r.collect(&Jitter, &frozen, Some(&mut live), 30).unwrap();
        assert_eq!(live.count(), 30);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let n = RunningNormalizer::new(4);
        let mut e1 = env();
        let mut e2 = env();
        let a = evaluate(&Jitter, e1.as_mut(), &n, 3, 11).unwrap();
        let b = evaluate(&Jitter, e2.as_mut(), &n, 3, 11).unwrap();
        assert_eq!(a, b);
        assert!(a < 0.0);
    }
}
