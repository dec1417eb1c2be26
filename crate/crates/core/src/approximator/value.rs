use rand::Rng;

use super::mlp::{MlpCache, MlpLayout};
use crate::error::{invalid, shape, Result};

/// Scalar state-value network.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    layout: MlpLayout,
    params: Vec<f64>,
}

impl ValueNet {
    pub fn init<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let layout = MlpLayout::with_hidden(obs_dim, hidden, 1)?;
        let params = layout.init(rng, 1.0);
        Self::from_parts(layout, params)
    }

    pub fn from_parts(layout: MlpLayout, params: Vec<f64>) -> Result<Self> {
        if layout.output_dim() != 1 {
            return Err(invalid("value network must have one output"));
        }
        if params.len() != layout.num_params() {
            return Err(shape(format!(
                "value net expects {} parameters, got {}",
                layout.num_params(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(crate::Error::NonFinite("value parameter".into()));
        }
        Ok(Self { layout, params })
    }

    pub fn layout(&self) -> &MlpLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        let mut cache = MlpCache::default();
        self.value_cached(obs, &mut cache)
    }

    pub fn value_cached(&self, obs: &[f64], cache: &mut MlpCache) -> f64 {
        self.layout.forward(&self.params, obs, cache)[0]
    }

    /// Adds `scale * ∂V(s)/∂θ` into `grad` and returns `V(s)`.
    pub fn value_grad_into(
        &self,
        obs: &[f64],
        scale: f64,
        cache: &mut MlpCache,
        grad: &mut [f64],
    ) -> f64 {
        let v = self.value_cached(obs, cache);
        self.layout.backward(&self.params, cache, &[scale], grad);
        v
    }

    /// Adds `scale_of(V(s)) * ∂V(s)/∂θ` into `grad` and returns `V(s)`.
    pub fn value_scaled_grad_into(
        &self,
        obs: &[f64],
        cache: &mut MlpCache,
        grad: &mut [f64],
        scale_of: impl FnOnce(f64) -> f64,
    ) -> f64 {
        let v = self.value_cached(obs, cache);
        self.layout
            .backward(&self.params, cache, &[scale_of(v)], grad);
        v
    }

    pub fn value_and_grad(&self, obs: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut cache = MlpCache::default();
        let v = self.value_grad_into(obs, 1.0, &mut cache, &mut grad);
        (v, grad)
    }
}
