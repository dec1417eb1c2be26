use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Layer sizes of a fully connected network, input first. Hidden layers use
/// tanh; the output layer is linear. Parameters live in one flat vector laid
/// out as `W_0, b_0, W_1, b_1, ...` with each `W_l` row-major `(out, in)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpLayout {
    sizes: Vec<usize>,
}

/// Intermediate activations retained by [`MlpLayout::forward`] for the
/// backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// `acts[0]` is the input; `acts[l + 1]` is the output of layer `l`.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], |v| v.as_slice())
    }
}

impl MlpLayout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self { sizes })
    }

    /// `input -> hidden... -> output`.
    pub fn with_hidden(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("nonempty")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Offsets of `(W_l, b_l)` within the flat vector.
    fn offsets(&self, layer: usize) -> (usize, usize) {
        let start: usize = self.sizes[..layer + 1]
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum();
        (start, start + self.sizes[layer + 1] * self.sizes[layer])
    }

    /// Shapes of the weight and bias tensors in storage order.
    pub fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        self.sizes
            .windows(2)
            .flat_map(|w| [vec![w[1], w[0]], vec![w[1]]])
            .collect()
    }

    /// Uniform weights with variance `gain² / fan_in`, zero biases. The last
    /// layer is scaled by `output_gain`.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, output_gain: f64) -> Vec<f64> {
        let mut params = vec![0.0; self.num_params()];
        for l in 0..self.num_layers() {
            let (w, _) = self.offsets(l);
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let gain = if l + 1 == self.num_layers() {
                output_gain
            } else {
                1.0
            };
            let bound = gain * (3.0 / fan_in as f64).sqrt();
            for p in &mut params[w..w + fan_in * fan_out] {
                *p = if bound > 0.0 {
                    rng.random_range(-bound..bound)
                } else {
                    0.0
                };
            }
        }
        params
    }

    /// Evaluates the network, storing activations in `cache`.
    pub fn forward<'c>(&self, params: &[f64], input: &[f64], cache: &'c mut MlpCache) -> &'c [f64] {
        debug_assert_eq!(params.len(), self.num_params());
        debug_assert_eq!(input.len(), self.input_dim());
        let n = self.num_layers();
        cache.acts.resize_with(n + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(input);
        for l in 0..n {
            let (w_off, b_off) = self.offsets(l);
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let (before, after) = cache.acts.split_at_mut(l + 1);
            let x = &before[l];
            let y = &mut after[0];
            y.clear();
            for o in 0..fan_out {
                let row = &params[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                let mut s = params[b_off + o];
                for (wi, xi) in row.iter().zip(x) {
                    s += wi * xi;
                }
                y.push(if l + 1 < n { s.tanh() } else { s });
            }
        }
        cache.output()
    }

    /// Adds `∂(dout · output)/∂params` into `grad` using the activations from
    /// the preceding `forward`.
    pub fn backward(&self, params: &[f64], cache: &mut MlpCache, dout: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.num_params());
        let n = self.num_layers();
        let MlpCache {
            acts,
            delta,
            next_delta,
        } = cache;
        delta.clear();
        delta.extend_from_slice(dout);
        for l in (0..n).rev() {
            let (w_off, b_off) = self.offsets(l);
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &acts[l];
            for o in 0..fan_out {
                let d = delta[o];
                grad[b_off + o] += d;
                if d != 0.0 {
                    let g = &mut grad[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi += d * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            next_delta.clear();
            next_delta.resize(fan_in, 0.0);
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &params[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                for (nd, wi) in next_delta.iter_mut().zip(row) {
                    *nd += d * wi;
                }
            }
            // Hidden activations are tanh outputs: d tanh = 1 - y².
            for (nd, y) in next_delta.iter_mut().zip(x) {
                *nd *= 1.0 - y * y;
            }
            std::mem::swap(delta, next_delta);
        }
    }
}
