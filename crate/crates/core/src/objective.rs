//! Clipped surrogate objectives and the sample-based total variation estimate.

use serde::{Deserialize, Serialize};

use crate::approximator::{GaussianPolicy, MlpCache};
use crate::buffer::WeightedSample;
use crate::error::{invalid, shape, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    epsilon: f64,
}

impl ClipConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid(format!("clip epsilon {epsilon} outside (0, 1)")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// `clip(ratio_pi, ratio_pik - ε, ratio_pik + ε)`.
pub fn generalized_clip(ratio_pi: f64, ratio_pik: f64, epsilon: f64) -> f64 {
    ratio_pi.clamp(ratio_pik - epsilon, ratio_pik + epsilon)
}

/// One sample's contribution to a clipped surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleObjective {
    pub value: f64,
    /// Derivative of `value` with respect to `log π(a|s)`.
    pub grad_factor: f64,
    /// Whether the ratio lies outside its clipping range.
    pub clipped: bool,
}

/// `min(r Â, clip(r, c - ε, c + ε) Â)` where `c` is the range center.
pub fn clipped_surrogate(ratio: f64, center: f64, advantage: f64, epsilon: f64) -> SampleObjective {
    let unclipped = ratio * advantage;
    let bounded = generalized_clip(ratio, center, epsilon);
    let clipped = bounded != ratio;
    let alt = bounded * advantage;
    if unclipped <= alt {
        SampleObjective {
            value: unclipped,
            grad_factor: unclipped,
            clipped,
        }
    } else {
        SampleObjective {
            value: alt,
            grad_factor: 0.0,
            clipped,
        }
    }
}

/// `min(r Â, clip(r, 1 - ε, 1 + ε) Â)`.
pub fn ppo_loss(ratio: f64, advantage: f64, clip: ClipConfig) -> SampleObjective {
    let unclipped = ratio * advantage;
    let bounded = ratio.clamp(1.0 - clip.epsilon, 1.0 + clip.epsilon);
    let alt = bounded * advantage;
    let clipped = bounded != ratio;
    if unclipped <= alt {
        SampleObjective {
            value: unclipped,
            grad_factor: unclipped,
            clipped,
        }
    } else {
        SampleObjective {
            value: alt,
            grad_factor: 0.0,
            clipped,
        }
    }
}

/// Aggregate over a minibatch. `loss` is the negated objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub clip_frac: f64,
    /// Samples dropped because their ratio was not finite.
    pub rejected: usize,
}

/// Empirical generalized objective over `samples`:
/// `-(Σ w_j min(r_j Ã_j, clip(r_j, c_j ± ε) Ã_j)) / Σ w_j`, with
/// `r_j = π(a|s) / π_b(a|s)` and `c_j = π_k / π_b`. When `grad` is given, the
/// gradient of the loss is added to it.
pub fn geppo_loss(
    policy: &GaussianPolicy,
    samples: &[&WeightedSample],
    advantages: &[f64],
    clip: ClipConfig,
    mut grad: Option<&mut [f64]>,
) -> Result<LossOutput> {
    if samples.len() != advantages.len() {
        return Err(shape("samples and advantages differ in length"));
    }
    if samples.is_empty() {
        return Err(invalid("empty minibatch"));
    }
    let total_w: f64 = samples.iter().map(|s| s.weight).sum();
    let mut cache = MlpCache::default();
    let mut sum = 0.0;
    let mut clipped = 0usize;
    let mut rejected = 0usize;
    for (s, &adv) in samples.iter().zip(advantages) {
        let center = s.center();
        let objective = |lp: f64| {
            let ratio = (lp - s.behavior_logprob).exp();
            ratio
                .is_finite()
                .then(|| clipped_surrogate(ratio, center, adv, clip.epsilon))
        };
        let outcome = match grad.as_deref_mut() {
            Some(g) => {
                let mut out = None;
                policy.logprob_scaled_grad_into(&s.obs, &s.action, &mut cache, g, |lp| {
                    out = objective(lp);
                    out.map_or(0.0, |o| -s.weight * o.grad_factor / total_w)
                });
                out
            }
            None => objective(policy.logprob_cached(&s.obs, &s.action, &mut cache)),
        };
        match outcome {
            Some(o) => {
                sum += s.weight * o.value;
                clipped += o.clipped as usize;
            }
            None => rejected += 1,
        }
    }
    Ok(LossOutput {
        loss: -sum / total_w,
        clip_frac: clipped as f64 / samples.len() as f64,
        rejected,
    })
}

/// Plain clipped objective with ratios `π / π_b` and unit weights, for
/// checking the generalized path against.
pub fn ppo_empirical_loss(
    policy: &GaussianPolicy,
    samples: &[&WeightedSample],
    advantages: &[f64],
    clip: ClipConfig,
) -> Result<f64> {
    if samples.len() != advantages.len() || samples.is_empty() {
        return Err(shape(
            "samples and advantages must be nonempty and equal length",
        ));
    }
    let mut cache = MlpCache::default();
    let mut sum = 0.0;
    for (s, &adv) in samples.iter().zip(advantages) {
        let lp = policy.logprob_cached(&s.obs, &s.action, &mut cache);
        let ratio = (lp - s.behavior_logprob).exp();
        sum += ppo_loss(ratio, adv, clip).value;
    }
    Ok(-sum / samples.len() as f64)
}

/// `½ Σ w_j |r_j - c_j| / Σ w_j`.
pub fn tv_estimate(weights: &[f64], ratio_new: &[f64], center: &[f64]) -> Result<f64> {
    if weights.len() != ratio_new.len() || weights.len() != center.len() {
        return Err(shape("tv_estimate inputs differ in length"));
    }
    if weights.is_empty() {
        return Err(invalid("tv_estimate needs samples"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..weights.len() {
        num += weights[j] * (ratio_new[j] - center[j]).abs();
        den += weights[j];
    }
    Ok(0.5 * num / den)
}

/// [`tv_estimate`] of `candidate` against the current policy over `samples`.
pub fn tv_estimate_samples(candidate: &GaussianPolicy, samples: &[&WeightedSample]) -> Result<f64> {
    let mut cache = MlpCache::default();
    let mut weights = Vec::with_capacity(samples.len());
    let mut ratio = Vec::with_capacity(samples.len());
    let mut center = Vec::with_capacity(samples.len());
    for s in samples {
        let lp = candidate.logprob_cached(&s.obs, &s.action, &mut cache);
        let r = (lp - s.behavior_logprob).exp();
        if !r.is_finite() {
            continue;
        }
        weights.push(s.weight);
        ratio.push(r);
        center.push(s.center());
    }
    tv_estimate(&weights, &ratio, &center)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eps(e: f64) -> ClipConfig {
        ClipConfig::new(e).unwrap()
    }

    #[test]
    fn ppo_examples() {
        assert!((ppo_loss(1.3, 1.0, eps(0.2)).value - 1.2).abs() < 1e-15);
        assert_eq!(ppo_loss(0.5, -1.0, eps(0.2)).value, -0.8);
        for a in [-2.0, 0.0, 0.7] {
            assert_eq!(ppo_loss(1.0, a, eps(0.1)).value, a);
        }
        let o = ppo_loss(1.3, 1.0, eps(0.2));
        assert!(o.clipped);
        assert_eq!(o.grad_factor, 0.0);
    }

    #[test]
    fn generalized_clip_examples() {
        assert!((generalized_clip(1.5, 1.2, 0.1) - 1.3).abs() < 1e-15);
        assert_eq!(generalized_clip(0.7, 1.0, 0.2), 0.8);
        assert_eq!(generalized_clip(0.93, 0.93, 0.1), 0.93);
    }

    #[test]
    fn clip_config_bounds() {
        assert!(ClipConfig::new(0.0).is_err());
        assert!(ClipConfig::new(1.0).is_err());
        assert!(ClipConfig::new(0.1).is_ok());
    }

    #[test]
    fn lr_free_tv_examples() {
        assert_eq!(
            tv_estimate(&[1.0, 2.0], &[0.5, 1.5], &[0.5, 1.5]).unwrap(),
            0.0
        );
        assert!((tv_estimate(&[1.0, 1.0], &[1.2, 0.8], &[1.0, 1.0]).unwrap() - 0.1).abs() < 1e-15);
        assert!(tv_estimate(&[], &[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn surrogate_never_exceeds_unclipped(r in 0.0f64..3.0, c in 0.05f64..3.0, a in -5.0f64..5.0, e in 0.01f64..0.99) {
            let o = clipped_surrogate(r, c, a, e);
            prop_assert!(o.value <= r * a);
            prop_assert!((generalized_clip(r, c, e) - c).abs() <= e + 1e-15);
        }

        #[test]
        fn unit_center_matches_ppo(r in 0.0f64..3.0, a in -5.0f64..5.0, e in 0.01f64..0.99) {
            prop_assert_eq!(clipped_surrogate(r, 1.0, a, e), ppo_loss(r, a, eps(e)));
        }
    }
}
