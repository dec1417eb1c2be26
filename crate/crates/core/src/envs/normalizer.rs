use serde::{Deserialize, Serialize};

const STD_FLOOR: f64 = 1e-8;

/// Online per-dimension mean and variance (Welford).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    count: u64,
    mean: Vec<f64>,
    /// Sum of squared deviations from the running mean.
    m2: Vec<f64>,
}

impl RunningNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    /// Statistics with zero mean and unit variance, so `normalize` is the
    /// identity map.
    pub fn identity(dim: usize) -> Self {
        Self {
            count: 1,
            mean: vec![0.0; dim],
            m2: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Population variance; zero before the first observation.
    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.dim()];
        }
        self.m2
            .iter()
            .map(|m| (m / self.count as f64).max(0.0))
            .collect()
    }

    pub fn update(&mut self, obs: &[f64]) {
        assert_eq!(obs.len(), self.dim(), "observation dimension");
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(obs) {
            let delta = x - *mean;
            *mean += delta / n;
            *m2 += delta * (x - *mean);
        }
    }

    /// Standardizes with the current statistics, leaving them untouched.
    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; obs.len()];
        self.normalize_into(obs, &mut out);
        out
    }

    /// Writes the standardized `obs` into `out`. Without statistics the
    /// observation passes through unchanged.
    pub fn normalize_into(&self, obs: &[f64], out: &mut [f64]) {
        assert_eq!(obs.len(), self.dim(), "observation dimension");
        if self.count == 0 {
            out.copy_from_slice(obs);
            return;
        }
        let n = self.count as f64;
        for i in 0..obs.len() {
            let std = (self.m2[i] / n).max(0.0).sqrt().max(STD_FLOOR);
            out[i] = (obs[i] - self.mean[i]) / std;
        }
    }

    /// Folds `obs` into the statistics, then standardizes it.
    pub fn normalize_obs(&mut self, obs: &[f64]) -> Vec<f64> {
        self.update(obs);
        self.normalize(obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_observation_maps_to_zero() {
        let mut n = RunningNormalizer::new(3);
        assert_eq!(n.normalize_obs(&[4.0, -2.0, 7.5]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_statistics_pass_through() {
        assert_eq!(
            RunningNormalizer::new(2).normalize(&[3.0, -1.0]),
            vec![3.0, -1.0]
        );
    }

    #[test]
    fn constant_stream_converges_to_zero() {
        let mut n = RunningNormalizer::new(1);
        for _ in 0..100 {
            let out = n.normalize_obs(&[3.25]);
            assert!(out[0].abs() < 1e-6);
        }
    }

    #[test]
    fn alternating_stream_moments() {
        let mut n = RunningNormalizer::new(1);
        for i in 0..1000 {
            n.update(&[if i % 2 == 0 { 0.0 } else { 2.0 }]);
        }
        assert!((n.mean()[0] - 1.0).abs() < 1e-12);
        assert!((n.variance()[0] - 1.0).abs() < 1e-12);
        assert!((n.normalize(&[2.0])[0] - 1.0).abs() < 1e-12);
        assert!((n.normalize(&[0.0])[0] + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_batch_moments(xs in proptest::collection::vec(-100.0f64..100.0, 1..200)) {
            let mut n = RunningNormalizer::new(1);
            let mut last_count = 0;
            for &x in &xs {
                n.update(&[x]);
                prop_assert!(n.count() > last_count);
                last_count = n.count();
                prop_assert!(n.variance()[0] >= 0.0);
            }
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            prop_assert!((n.mean()[0] - mean).abs() < 1e-9);
            prop_assert!((n.variance()[0] - var).abs() < 1e-7 * (1.0 + var));
        }
    }
}
