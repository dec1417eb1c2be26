//! Advantage and value-target estimation.
//!
//! [`gae`] is the on-policy λ-return recursion. [`vtrace`] is its off-policy
//! counterpart: every multi-step correction is weighted by products of
//! truncated ratios `c_t = min(c̄, π_k / π_b)`. Products are reset at episode
//! ends. [`standardize_starting_point`] standardizes `(π_k / π_b) · Â`, the
//! value each sample's surrogate takes at the start of a policy update.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub c_bar: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            gamma: 0.995,
            lambda: 0.97,
            c_bar: 1.0,
        }
    }
}

impl EstimatorConfig {
    /// `γ = 1` is accepted for finite-horizon use.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.c_bar > 0.0 && self.c_bar.is_finite()) {
            return Err(invalid(format!("c_bar {} must be positive", self.c_bar)));
        }
        Ok(())
    }
}

/// A contiguous run of transitions with value estimates at both ends.
/// `done` marks the last step of an episode (terminal or truncated); only
/// `terminal` suppresses the bootstrap.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub rewards: &'a [f64],
    pub values: &'a [f64],
    pub next_values: &'a [f64],
    pub terminal: &'a [bool],
    pub done: &'a [bool],
}

impl Segment<'_> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        if [
            self.values.len(),
            self.next_values.len(),
            self.terminal.len(),
            self.done.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err(shape("segment fields have different lengths"));
        }
        if self
            .rewards
            .iter()
            .chain(self.values)
            .chain(self.next_values)
            .any(|x| !x.is_finite())
        {
            return Err(Error::NonFinite("segment reward or value".into()));
        }
        if self.terminal.iter().zip(self.done).any(|(&t, &d)| t && !d) {
            return Err(invalid("terminal step not marked done"));
        }
        Ok(())
    }

    /// One-step residuals `δ_t = r_t + γ (1 - terminal_t) V(s'_t) - V(s_t)`.
    pub fn td_residuals(&self, gamma: f64) -> Vec<f64> {
        (0..self.len())
            .map(|t| {
                let boot = if self.terminal[t] {
                    0.0
                } else {
                    gamma * self.next_values[t]
                };
                self.rewards[t] + boot - self.values[t]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageBatch {
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
    /// `(π_k / π_b) · Â`; equals `Â` on-policy.
    pub starting_point: Vec<f64>,
}

/// `Â_t = δ_t + γλ (1 - done_t) Â_{t+1}`, target `Â_t + V(s_t)`.
pub fn gae(seg: &Segment<'_>, cfg: &EstimatorConfig) -> Result<AdvantageBatch> {
    cfg.validate()?;
    seg.check()?;
    let delta = seg.td_residuals(cfg.gamma);
    let mut adv = vec![0.0; seg.len()];
    let mut next = 0.0;
    for t in (0..seg.len()).rev() {
        let carry = if seg.done[t] {
            0.0
        } else {
            cfg.gamma * cfg.lambda * next
        };
        adv[t] = delta[t] + carry;
        next = adv[t];
    }
    let targets = adv.iter().zip(seg.values).map(|(a, v)| a + v).collect();
    Ok(AdvantageBatch {
        starting_point: adv.clone(),
        advantages: adv,
        targets,
    })
}

/// `min(c̄, exp(logp_current - logp_behavior))` per step.
pub fn truncated_ratios(
    logp_current: &[f64],
    logp_behavior: &[f64],
    c_bar: f64,
) -> Result<Vec<f64>> {
    if logp_current.len() != logp_behavior.len() {
        return Err(shape("log-probability slices differ in length"));
    }
    logp_current
        .iter()
        .zip(logp_behavior)
        .map(|(c, b)| {
            let r = (c - b).exp();
            if r.is_finite() {
                Ok(r.min(c_bar))
            } else {
                Err(Error::NonFinite(format!(
                    "ratio from log-probs {c} and {b}"
                )))
            }
        })
        .collect()
}

/// λ-weighted V-trace advantages `Â_t = δ_t + γλ (1 - done_t) c_{t+1} Â_{t+1}`
/// and value targets `V(s_t) + c_t Â_t`.
pub fn vtrace(
    seg: &Segment<'_>,
    logp_current: &[f64],
    logp_behavior: &[f64],
    cfg: &EstimatorConfig,
) -> Result<AdvantageBatch> {
    cfg.validate()?;
    seg.check()?;
    if logp_current.len() != seg.len() {
        return Err(shape("log-probabilities do not match the segment"));
    }
    let c = truncated_ratios(logp_current, logp_behavior, cfg.c_bar)?;
    let delta = seg.td_residuals(cfg.gamma);
    let mut adv = vec![0.0; seg.len()];
    let mut next = 0.0;
    for t in (0..seg.len()).rev() {
        let carry = if seg.done[t] {
            0.0
        } else {
            cfg.gamma * cfg.lambda * next
        };
        adv[t] = delta[t] + carry;
        next = c[t] * adv[t];
    }
    let targets = (0..seg.len())
        .map(|t| seg.values[t] + c[t] * adv[t])
        .collect();
    let starting_point = (0..seg.len())
        .map(|t| (logp_current[t] - logp_behavior[t]).exp() * adv[t])
        .collect();
    Ok(AdvantageBatch {
        advantages: adv,
        targets,
        starting_point,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub values: Vec<f64>,
    /// Mean that was subtracted.
    pub mean: f64,
    /// Divisor that was applied: the population std, or 1 when degenerate.
    pub scale: f64,
    /// Set when the input had (near) zero spread; values are then only
    /// centered.
    pub degenerate: bool,
}

impl Standardized {
    /// Applies the same shift and scale to another value.
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale
    }
}

const DEGENERATE_STD: f64 = 1e-12;

/// Standardizes to mean 0 and population standard deviation 1.
pub fn standardize(values: &[f64]) -> Result<Standardized> {
    if values.is_empty() {
        return Err(invalid("cannot standardize an empty minibatch"));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("standardization input".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let degenerate = std <= DEGENERATE_STD * (1.0 + mean.abs());
    let scale = if degenerate { 1.0 } else { std };
    Ok(Standardized {
        values: values.iter().map(|x| (x - mean) / scale).collect(),
        mean,
        scale,
        degenerate,
    })
}

/// Standardizes `ratios[i] · advantages[i]` over a minibatch, where
/// `ratios` are `π_k / π_b`. The trainer applies the resulting moments to the
/// advantages themselves, so the shift acts as a constant baseline.
pub fn standardize_starting_point(ratios: &[f64], advantages: &[f64]) -> Result<Standardized> {
    if ratios.len() != advantages.len() {
        return Err(shape("ratios and advantages differ in length"));
    }
    let start: Vec<f64> = ratios.iter().zip(advantages).map(|(r, a)| r * a).collect();
    standardize(&start)
}
