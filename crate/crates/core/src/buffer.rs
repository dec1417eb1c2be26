//! Replay window over the most recent policies and their trajectories.

use std::collections::VecDeque;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::approximator::{GaussianPolicy, MlpCache};
use crate::envs::{RunningNormalizer, TrajectoryBatch};
use crate::error::{invalid, shape, Error, Result};
use crate::weights::PolicyWeights;

/// A frozen behavior policy: parameters plus the normalizer it acted with.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    pub iteration: usize,
    pub policy: GaussianPolicy,
    pub normalizer: RunningNormalizer,
}

impl PolicySnapshot {
    /// SHA-256 over the parameter checkpoint and normalizer state.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.iteration as u64).to_le_bytes());
        h.update(self.policy.to_checkpoint().to_bytes());
        h.update(serde_json::to_vec(&self.normalizer).expect("normalizer serializes"));
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone)]
struct Entry {
    snapshot: Arc<PolicySnapshot>,
    batch: TrajectoryBatch,
}

/// Up to `capacity` batches of exactly `n` transitions, newest first. The
/// entry at index `i` has age `i`.
#[derive(Debug, Clone)]
pub struct ReplayWindow {
    capacity: usize,
    n: usize,
    entries: VecDeque<Entry>,
}

/// One transition prepared for a policy update under the current policy.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub obs: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub done: bool,
    pub behavior_logprob: f64,
    /// `log π_k(a|s)` under the current policy.
    pub current_logprob: f64,
    pub age: usize,
    /// `ν_age · M`.
    pub weight: f64,
}

impl WeightedSample {
    /// `π_k / π_{k-i}`.
    pub fn center(&self) -> f64 {
        (self.current_logprob - self.behavior_logprob).exp()
    }
}

/// A contiguous time-ordered run of samples from one behavior policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Group {
    pub age: usize,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSet {
    pub samples: Vec<WeightedSample>,
    pub groups: Vec<Group>,
    /// Weights actually applied, newest first.
    pub nu: PolicyWeights,
}

impl AssembledSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `Σ w_j f_j / Σ w_j`.
    pub fn weighted_mean(&self, f: impl Fn(usize, &WeightedSample) -> f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, s) in self.samples.iter().enumerate() {
            num += s.weight * f(j, s);
            den += s.weight;
        }
        num / den
    }
}

impl ReplayWindow {
    pub fn new(capacity: usize, n: usize) -> Result<Self> {
        if capacity == 0 || n == 0 {
            return Err(invalid(
                "replay window needs positive capacity and batch size",
            ));
        }
        Ok(Self {
            capacity,
            n,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn batch_size(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ages(&self) -> Vec<usize> {
        (0..self.entries.len()).collect()
    }

    pub fn snapshot(&self, age: usize) -> Option<&PolicySnapshot> {
        self.entries.get(age).map(|e| e.snapshot.as_ref())
    }

    pub fn batch(&self, age: usize) -> Option<&TrajectoryBatch> {
        self.entries.get(age).map(|e| &e.batch)
    }

    /// Inserts the newest batch, evicting the oldest when full.
    pub fn push(&mut self, snapshot: PolicySnapshot, mut batch: TrajectoryBatch) -> Result<()> {
        if batch.len() != self.n {
            return Err(shape(format!(
                "batch has {} transitions, expected {}",
                batch.len(),
                self.n
            )));
        }
        for t in &mut batch.transitions {
            t.policy_age = 0;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_back();
        }
        for e in &mut self.entries {
            for t in &mut e.batch.transitions {
                t.policy_age += 1;
            }
        }
        self.entries.push_front(Entry {
            snapshot: Arc::new(snapshot),
            batch,
        });
        Ok(())
    }

    /// Builds the weighted training set. With fewer stored batches than
    /// weights, `nu` is truncated to the newest entries and renormalized.
    /// Observations are normalized with `normalizer`, the one paired with
    /// `current`.
    pub fn assemble(
        &self,
        nu: &PolicyWeights,
        current: &GaussianPolicy,
        normalizer: &RunningNormalizer,
    ) -> Result<AssembledSet> {
        if self.entries.is_empty() {
            return Err(invalid("cannot assemble from an empty window"));
        }
        let nu = nu.trimmed().truncated(self.entries.len())?;
        let m = nu.m() as f64;
        let mut samples = Vec::with_capacity(nu.m() * self.n);
        let mut groups = Vec::new();
        let mut cache = MlpCache::default();
        for (age, (entry, &w)) in self.entries.iter().zip(nu.as_slice()).enumerate() {
            let start = samples.len();
            for t in &entry.batch.transitions {
                let obs = normalizer.normalize(&t.state);
                let current_logprob = current.logprob_cached(&obs, &t.action, &mut cache);
                let center = (current_logprob - t.behavior_logprob).exp();
                if !(center.is_finite() && center > 0.0) {
                    return Err(Error::NonFinite(format!(
                        "ratio to policy of age {age} is {center}"
                    )));
                }
                samples.push(WeightedSample {
                    next_obs: normalizer.normalize(&t.next_state),
                    obs,
                    action: t.action.clone(),
                    reward: t.reward,
                    terminal: t.terminal,
                    done: t.done(),
                    behavior_logprob: t.behavior_logprob,
                    current_logprob,
                    age,
                    weight: w * m,
                });
            }
            groups.push(Group {
                age,
                start,
                len: samples.len() - start,
            });
        }
        Ok(AssembledSet {
            samples,
            groups,
            nu,
        })
    }
}
