use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{MlpCache, MlpLayout};
use crate::envs::Actor;
use crate::error::{shape, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian with an MLP mean and a state-independent log standard
/// deviation. The flat parameter vector is the mean network followed by
/// `log_std`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    layout: MlpLayout,
    params: Vec<f64>,
}

impl GaussianPolicy {
    /// Seeded initialization. `log_std` starts at `ln(std_multiple * half_range)`.
    pub fn init<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        half_range: &[f64],
        std_multiple: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let layout = MlpLayout::with_hidden(obs_dim, hidden, half_range.len())?;
        let mut params = layout.init(rng, 0.01);
        params.extend(
            half_range
                .iter()
                .map(|h| (std_multiple * h).ln().clamp(LOG_STD_MIN, LOG_STD_MAX)),
        );
        Self::from_parts(layout, params)
    }

    pub fn from_parts(layout: MlpLayout, params: Vec<f64>) -> Result<Self> {
        if params.len() != layout.num_params() + layout.output_dim() {
            return Err(shape(format!(
                "policy expects {} parameters, got {}",
                layout.num_params() + layout.output_dim(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(crate::Error::NonFinite("policy parameter".into()));
        }
        Ok(Self { layout, params })
    }

    pub fn layout(&self) -> &MlpLayout {
        &self.layout
    }

    pub fn obs_dim(&self) -> usize {
        self.layout.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.layout.output_dim()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn split(&self) -> (&[f64], &[f64]) {
        self.params.split_at(self.layout.num_params())
    }

    pub fn log_std(&self) -> &[f64] {
        self.split().1
    }

    pub fn set_log_std(&mut self, log_std: &[f64]) {
        let n = self.layout.num_params();
        self.params[n..].copy_from_slice(log_std);
        self.clamp_log_std();
    }

    /// Mutable access for optimizers. Call [`Self::clamp_log_std`] afterwards.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn clamp_log_std(&mut self) {
        let n = self.layout.num_params();
        for s in &mut self.params[n..] {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        let mut cache = MlpCache::default();
        self.layout
            .forward(self.split().0, obs, &mut cache)
            .to_vec()
    }

    pub fn logprob(&self, obs: &[f64], action: &[f64]) -> f64 {
        let mut cache = MlpCache::default();
        self.logprob_cached(obs, action, &mut cache)
    }

    pub fn logprob_cached(&self, obs: &[f64], action: &[f64], cache: &mut MlpCache) -> f64 {
        let (net, log_std) = self.split();
        let mu = self.layout.forward(net, obs, cache);
        gaussian_logpdf(action, mu, log_std)
    }

    /// Adds `scale * ∂ logπ(a|s) / ∂θ` into `grad` and returns `logπ(a|s)`.
    pub fn logprob_grad_into(
        &self,
        obs: &[f64],
        action: &[f64],
        scale: f64,
        cache: &mut MlpCache,
        grad: &mut [f64],
    ) -> f64 {
        self.logprob_scaled_grad_into(obs, action, cache, grad, |_| scale)
    }

    /// Like [`Self::logprob_grad_into`], with the scale chosen from the
    /// log-density itself. A zero scale skips the backward pass.
    pub fn logprob_scaled_grad_into(
        &self,
        obs: &[f64],
        action: &[f64],
        cache: &mut MlpCache,
        grad: &mut [f64],
        scale_of: impl FnOnce(f64) -> f64,
    ) -> f64 {
        debug_assert_eq!(grad.len(), self.params.len());
        let (net, log_std) = self.split();
        let n = self.layout.num_params();
        let act_dim = self.act_dim();
        let mut mu = self.layout.forward(net, obs, cache).to_vec();
        let logp = gaussian_logpdf(action, &mu, log_std);
        let scale = scale_of(logp);
        if scale == 0.0 {
            return logp;
        }
        for j in 0..act_dim {
            let inv_var = (-2.0 * log_std[j]).exp();
            let diff = action[j] - mu[j];
            grad[n + j] += scale * (diff * diff * inv_var - 1.0);
            mu[j] = scale * diff * inv_var;
        }
        let (g_net, _) = grad.split_at_mut(n);
        self.layout.backward(net, cache, &mu, g_net);
        logp
    }

    /// `(logπ(a|s), ∂ logπ(a|s) / ∂θ)`.
    pub fn logprob_and_grad(&self, obs: &[f64], action: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut cache = MlpCache::default();
        let lp = self.logprob_grad_into(obs, action, 1.0, &mut cache, &mut grad);
        (lp, grad)
    }

    /// `mean + std * ξ`, `ξ ~ N(0, I)`.
    pub fn sample_action(&self, obs: &[f64], rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let mu = self.mean(obs);
        let log_std = self.log_std();
        mu.iter()
            .zip(log_std)
            .map(|(m, s)| {
                let xi: f64 = rng.sample(StandardNormal);
                m + s.exp() * xi
            })
            .collect()
    }
}

/// Diagonal Gaussian log-density.
pub fn gaussian_logpdf(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let mut lp = 0.0;
    for j in 0..x.len() {
        let z = (x[j] - mean[j]) * (-log_std[j]).exp();
        lp += -0.5 * z * z - log_std[j] - HALF_LN_2PI;
    }
    lp
}

impl Actor for GaussianPolicy {
    fn sample(&self, obs: &[f64], rng: &mut dyn rand::RngCore) -> (Vec<f64>, f64) {
        let action = self.sample_action(obs, rng);
        let lp = self.logprob(obs, &action);
        (action, lp)
    }

    fn mean_action(&self, obs: &[f64]) -> Vec<f64> {
        self.mean(obs)
    }
}
