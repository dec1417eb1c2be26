//! The training loop: collect, assemble, estimate, update, adapt, evaluate.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{clip_grad_norm, AdamState, GaussianPolicy, MlpCache, ValueNet};
use crate::buffer::{AssembledSet, PolicySnapshot, ReplayWindow, WeightedSample};
use crate::config::{Resolved, TrainerConfig, TvMode};
use crate::envs::{evaluate, make_env, Environment, Rollout, RunningNormalizer};
use crate::error::{Error, Result};
use crate::estimation::{gae, standardize_starting_point, vtrace, Segment};
use crate::lr::{LrAction, LrController};
use crate::objective::{geppo_loss, tv_estimate_samples, ClipConfig};

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationMetrics {
    pub iter: u64,
    /// Environment steps collected so far.
    pub steps: u64,
    pub eval_return: f64,
    pub tv_hat: f64,
    /// Learning rate for the next update.
    pub eta: f64,
    pub clip_frac: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub tv_hat: f64,
    pub eta_before: f64,
    pub eta_after: f64,
    pub lr_action: Option<LrAction>,
    /// Mean over minibatch steps.
    pub clip_frac: f64,
    /// Mean policy loss over minibatch steps.
    pub loss: f64,
    pub value_loss: f64,
    pub rejected: usize,
}

/// Advantages and value targets aligned with an assembled set.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

pub struct Trainer {
    cfg: TrainerConfig,
    resolved: Resolved,
    clip: ClipConfig,
    policy: GaussianPolicy,
    value: ValueNet,
    policy_adam: AdamState,
    value_adam: AdamState,
    lr: Option<LrController>,
    window: ReplayWindow,
    collector: Rollout,
    live: RunningNormalizer,
    frozen: RunningNormalizer,
    shuffle_rng: ChaCha8Rng,
    eval_env: Box<dyn Environment>,
    eval_seed: u64,
    iteration: u64,
    steps: u64,
}

impl Trainer {
    pub fn new(cfg: TrainerConfig) -> Result<Self> {
        let resolved = cfg.resolve()?;
        let clip = ClipConfig::new(resolved.epsilon)?;
        let env = make_env(cfg.env, &cfg.env_params);
        let spec = env.spec();
        let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut init_rng = ChaCha8Rng::seed_from_u64(master.random());
        let rollout_seed: u64 = master.random();
        let shuffle_rng = ChaCha8Rng::seed_from_u64(master.random());
        let eval_seed: u64 = master.random();
        let policy = GaussianPolicy::init(
            spec.obs_dim,
            &cfg.hidden,
            &spec.half_action_range(),
            cfg.init_std_multiple,
            &mut init_rng,
        )?;
        let value = ValueNet::init(spec.obs_dim, &cfg.hidden, &mut init_rng)?;
        let lr = if resolved.adaptive_lr {
            Some(LrController::new(
                cfg.eta0,
                cfg.alpha,
                cfg.beta,
                resolved.epsilon,
            )?)
        } else {
            None
        };
        Ok(Self {
            policy_adam: AdamState::new(policy.num_params(), cfg.eta0),
            value_adam: AdamState::new(value.params().len(), cfg.value_lr),
            window: ReplayWindow::new(resolved.m, resolved.batch_size)?,
            collector: Rollout::new(env, rollout_seed),
            live: RunningNormalizer::new(spec.obs_dim),
            frozen: RunningNormalizer::new(spec.obs_dim),
            eval_env: make_env(cfg.env, &cfg.env_params),
            cfg,
            resolved,
            clip,
            policy,
            value,
            lr,
            shuffle_rng,
            eval_seed,
            iteration: 0,
            steps: 0,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn resolved(&self) -> &Resolved {
        &self.resolved
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn value(&self) -> &ValueNet {
        &self.value
    }

    pub fn normalizer(&self) -> &RunningNormalizer {
        &self.frozen
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn eta(&self) -> f64 {
        self.lr.map_or(self.cfg.eta0, |c| c.eta())
    }

    /// Mean return of the current mean action over the fixed evaluation
    /// start states.
    pub fn evaluate(&mut self) -> Result<f64> {
        evaluate(
            &self.policy,
            self.eval_env.as_mut(),
            &self.frozen,
            self.cfg.eval_episodes,
            self.eval_seed,
        )
    }

    /// Advantages per behavior policy: GAE for the newest batch, V-trace for
    /// older ones.
    pub fn estimate(&self, set: &AssembledSet) -> Result<Estimates> {
        let est = self.cfg.estimator();
        let mut cache = MlpCache::default();
        let values: Vec<f64> = set
            .samples
            .iter()
            .map(|s| self.value.value_cached(&s.obs, &mut cache))
            .collect();
        let next_values: Vec<f64> = set
            .samples
            .iter()
            .map(|s| self.value.value_cached(&s.next_obs, &mut cache))
            .collect();
        let rewards: Vec<f64> = set.samples.iter().map(|s| s.reward).collect();
        let terminal: Vec<bool> = set.samples.iter().map(|s| s.terminal).collect();
        let done: Vec<bool> = set.samples.iter().map(|s| s.done).collect();
        let lp_cur: Vec<f64> = set.samples.iter().map(|s| s.current_logprob).collect();
        let lp_beh: Vec<f64> = set.samples.iter().map(|s| s.behavior_logprob).collect();
        let mut out = Estimates {
            advantages: Vec::with_capacity(set.len()),
            targets: Vec::with_capacity(set.len()),
        };
        for g in &set.groups {
            let r = g.start..g.start + g.len;
            let seg = Segment {
                rewards: &rewards[r.clone()],
                values: &values[r.clone()],
                next_values: &next_values[r.clone()],
                terminal: &terminal[r.clone()],
                done: &done[r.clone()],
            };
            let batch = if g.age == 0 {
                gae(&seg, &est)?
            } else {
                vtrace(&seg, &lp_cur[r.clone()], &lp_beh[r], &est)?
            };
            out.advantages.extend(batch.advantages);
            out.targets.extend(batch.targets);
        }
        Ok(out)
    }

    /// Minibatch updates of policy and value, then the TV estimate and
    /// learning-rate step.
    pub fn update(&mut self, set: &AssembledSet, est: &Estimates) -> Result<UpdateReport> {
        let total = set.len();
        let mb = self.cfg.minibatches;
        let eta_before = self.eta();
        self.policy_adam.lr = eta_before;
        let mut order: Vec<usize> = (0..total).collect();
        let mut pgrad = vec![0.0; self.policy.num_params()];
        let mut vgrad = vec![0.0; self.value.params().len()];
        let mut cache = MlpCache::default();
        let (mut loss_sum, mut clip_sum, mut vloss_sum) = (0.0, 0.0, 0.0);
        let mut rejected = 0;
        let (mut tv_sum, mut steps) = (0.0, 0usize);
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.shuffle_rng);
            for j in 0..mb {
                let chunk = &order[j * total / mb..(j + 1) * total / mb];
                let samples: Vec<&WeightedSample> =
                    chunk.iter().map(|&i| &set.samples[i]).collect();
                let centers: Vec<f64> = samples.iter().map(|s| s.center()).collect();
                let advs: Vec<f64> = chunk.iter().map(|&i| est.advantages[i]).collect();
                let start = standardize_starting_point(&centers, &advs)?;
                let eff: Vec<f64> = advs.iter().map(|&a| start.apply(a)).collect();

                pgrad.fill(0.0);
                let out = geppo_loss(&self.policy, &samples, &eff, self.clip, Some(&mut pgrad))?;
                if !out.loss.is_finite() {
                    return Err(self.diverged(format!("policy loss {}", out.loss)));
                }
                if let Some(max) = self.cfg.max_grad_norm {
                    clip_grad_norm(&mut pgrad, max);
                }
                self.policy_adam
                    .step(self.policy.params_mut(), &pgrad)
                    .map_err(|e| self.diverged(e.to_string()))?;
                self.policy.clamp_log_std();

                vgrad.fill(0.0);
                let scale = 1.0 / chunk.len() as f64;
                let mut vloss = 0.0;
                for &i in chunk {
                    let target = est.targets[i];
                    self.value.value_scaled_grad_into(
                        &set.samples[i].obs,
                        &mut cache,
                        &mut vgrad,
                        |v| {
                            vloss += 0.5 * (v - target) * (v - target) * scale;
                            (v - target) * scale
                        },
                    );
                }
                if let Some(max) = self.cfg.max_grad_norm {
                    clip_grad_norm(&mut vgrad, max);
                }
                self.value_adam
                    .step(self.value.params_mut(), &vgrad)
                    .map_err(|e| self.diverged(e.to_string()))?;

                if self.cfg.tv_mode == TvMode::MinibatchAverage {
                    tv_sum += tv_estimate_samples(&self.policy, &samples)?;
                }
                loss_sum += out.loss;
                clip_sum += out.clip_frac;
                vloss_sum += vloss;
                rejected += out.rejected;
                steps += 1;
            }
        }
        if self
            .policy
            .params()
            .iter()
            .chain(self.value.params())
            .any(|p| !p.is_finite())
        {
            return Err(self.diverged("non-finite parameters".into()));
        }
        let tv_hat = match self.cfg.tv_mode {
            TvMode::PostUpdate => {
                let all: Vec<&WeightedSample> = set.samples.iter().collect();
                tv_estimate_samples(&self.policy, &all)?
            }
            TvMode::MinibatchAverage => tv_sum / steps as f64,
        };
        let lr_action = match self.lr.as_mut() {
            Some(c) => Some(c.update(tv_hat)?),
            None => None,
        };
        Ok(UpdateReport {
            tv_hat,
            eta_before,
            eta_after: self.eta(),
            lr_action,
            clip_frac: clip_sum / steps as f64,
            loss: loss_sum / steps as f64,
            value_loss: vloss_sum / steps as f64,
            rejected,
        })
    }

    fn diverged(&self, detail: String) -> Error {
        Error::Diverged {
            iteration: self.iteration as usize,
            detail,
        }
    }

    /// Collects a batch with the current policy and returns the assembled
    /// training set without updating anything else.
    pub fn collect_and_assemble(&mut self) -> Result<AssembledSet> {
        let batch = self.collector.collect(
            &self.policy,
            &self.frozen,
            Some(&mut self.live),
            self.resolved.batch_size,
        )?;
        self.window.push(
            PolicySnapshot {
                iteration: self.iteration as usize,
                policy: self.policy.clone(),
                normalizer: self.frozen.clone(),
            },
            batch,
        )?;
        self.window
            .assemble(&self.resolved.nu, &self.policy, &self.frozen)
    }

    /// One full iteration.
    pub fn step(&mut self) -> Result<(IterationMetrics, UpdateReport)> {
        let set = self.collect_and_assemble()?;
        let est = self.estimate(&set)?;
        let report = self.update(&set, &est)?;
        let metrics = self.finish_iteration(&report)?;
        Ok((metrics, report))
    }

    /// Advances the normalizer snapshot and counters after [`Trainer::update`]
    /// and evaluates the updated policy.
    pub fn finish_iteration(&mut self, report: &UpdateReport) -> Result<IterationMetrics> {
        self.frozen = self.live.clone();
        self.iteration += 1;
        self.steps += self.resolved.batch_size as u64;
        let eval_return = self.evaluate()?;
        let metrics = IterationMetrics {
            iter: self.iteration,
            steps: self.steps,
            eval_return,
            tv_hat: report.tv_hat,
            eta: report.eta_after,
            clip_frac: report.clip_frac,
            loss: report.loss,
        };
        Ok(metrics)
    }
}

/// Final state of a training run.
pub struct TrainOutcome {
    pub policy: GaussianPolicy,
    pub value: ValueNet,
    pub normalizer: RunningNormalizer,
    pub metrics: Vec<IterationMetrics>,
}

/// Runs every configured iteration, handing each metrics record to `sink`.
pub fn train(
    cfg: TrainerConfig,
    mut sink: impl FnMut(&IterationMetrics) -> Result<()>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg)?;
    let mut metrics = Vec::new();
    for _ in 0..trainer.resolved().iterations {
        let (m, _) = trainer.step()?;
        sink(&m)?;
        metrics.push(m);
    }
    Ok(TrainOutcome {
        policy: trainer.policy,
        value: trainer.value,
        normalizer: trainer.frozen,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Algorithm;

    fn small(algorithm: Algorithm) -> TrainerConfig {
        TrainerConfig {
            algorithm,
            n: 64,
            big_n: 128,
            total_steps: 384,
            minibatches: 4,
            epochs: 2,
            hidden: vec![8],
            eval_episodes: 1,
            ..Default::default()
        }
    }

    #[test]
    fn zero_steps_returns_initial_policy() {
        let cfg = TrainerConfig {
            total_steps: 0,
            ..small(Algorithm::Geppo)
        };
        let initial = Trainer::new(cfg.clone()).unwrap().policy().clone();
        let out = train(cfg, |_| Ok(())).unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!(out.policy, initial);
    }

    #[test]
    fn runs_are_reproducible() {
        for alg in [Algorithm::Ppo, Algorithm::Geppo, Algorithm::PpoAdapt] {
            let a = train(small(alg), |_| Ok(())).unwrap();
            let b = train(small(alg), |_| Ok(())).unwrap();
            assert_eq!(a.metrics, b.metrics);
            assert_eq!(a.policy, b.policy);
            let expected = if alg == Algorithm::Geppo { 6 } else { 3 };
            assert_eq!(a.metrics.len(), expected);
        }
    }

    #[test]
    fn first_update_starts_at_range_center() {
        let mut t = Trainer::new(small(Algorithm::Geppo)).unwrap();
        let set = t.collect_and_assemble().unwrap();
        assert!(set.samples.iter().all(|s| s.center() == 1.0));
        let est = t.estimate(&set).unwrap();
        assert_eq!(est.advantages.len(), set.len());
        let report = t.update(&set, &est).unwrap();
        assert!(report.tv_hat > 0.0 && report.tv_hat.is_finite());
        assert_eq!(report.rejected, 0);
    }

    #[test]
    fn minibatch_tv_mode_runs() {
        let cfg = TrainerConfig {
            tv_mode: TvMode::MinibatchAverage,
            ..small(Algorithm::Geppo)
        };
        let out = train(cfg, |_| Ok(())).unwrap();
        assert!(out.metrics.iter().all(|m| m.tv_hat >= 0.0));
    }
}
