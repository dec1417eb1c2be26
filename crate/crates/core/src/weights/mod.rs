//! Policy weights over the last `M` policies.
//!
//! Covers the effective sample size, the clipping-parameter mapping that
//! keeps the worst-case expected performance loss equal to PPO's, the
//! uniform-weight trade-off factors, and the two convex programs that pick
//! optimal weights.

mod grid;
mod solver;

pub use grid::{grid_oracle, GridResult};
pub use solver::{projected_gradient, solve_essopt, solve_tvopt, solve_uniform};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Weights below this are snapped to zero.
pub const SNAP_TOL: f64 = 1e-12;

/// Which program selects the policy weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightProgram {
    /// Maximize effective sample size at PPO's rate of policy change.
    #[default]
    Essopt,
    /// Maximize policy change at PPO's effective sample size.
    Tvopt,
    /// Uniform weights over `2B - 1` policies.
    Uniform,
}

impl WeightProgram {
    pub fn solve(self, b: f64, m_bar: usize) -> Result<PolicyWeights> {
        match self {
            WeightProgram::Essopt => solve_essopt(b, m_bar),
            WeightProgram::Tvopt => solve_tvopt(b, m_bar),
            WeightProgram::Uniform => solve_uniform(b, m_bar),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightProgram::Essopt => "essopt",
            WeightProgram::Tvopt => "tvopt",
            WeightProgram::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for WeightProgram {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "essopt" => Ok(WeightProgram::Essopt),
            "tvopt" => Ok(WeightProgram::Tvopt),
            "uniform" => Ok(WeightProgram::Uniform),
            other => Err(invalid(format!("unknown weight program '{other}'"))),
        }
    }
}

/// A distribution `ν` over the last `M` policies, newest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PolicyWeights {
    nu: Vec<f64>,
}

impl TryFrom<Vec<f64>> for PolicyWeights {
    type Error = crate::Error;

    fn try_from(nu: Vec<f64>) -> Result<Self> {
        PolicyWeights::new(nu)
    }
}

impl From<PolicyWeights> for Vec<f64> {
    fn from(w: PolicyWeights) -> Self {
        w.nu
    }
}

impl PolicyWeights {
    pub fn new(nu: Vec<f64>) -> Result<Self> {
        if nu.is_empty() {
            return Err(invalid("policy weights must be nonempty"));
        }
        if let Some(x) = nu.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(invalid(format!(
                "policy weight {x} is negative or non-finite"
            )));
        }
        let total: f64 = nu.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("policy weights sum to {total}")));
        }
        Ok(Self { nu })
    }

    pub fn uniform(m: usize) -> Self {
        assert!(m >= 1);
        Self {
            nu: vec![1.0 / m as f64; m],
        }
    }

    /// Zeroes entries below [`SNAP_TOL`] and renormalizes.
    pub(crate) fn snapped(mut nu: Vec<f64>) -> Result<Self> {
        for x in nu.iter_mut() {
            if *x < SNAP_TOL {
                *x = 0.0;
            }
        }
        let total: f64 = nu.iter().sum();
        if total <= 0.0 {
            return Err(invalid("all policy weights vanished"));
        }
        for x in nu.iter_mut() {
            *x /= total;
        }
        Self::new(nu)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.nu
    }

    /// Length of the weight vector, including trailing zeros.
    pub fn m(&self) -> usize {
        self.nu.len()
    }

    /// Number of policies up to and including the oldest with nonzero weight.
    pub fn effective_m(&self) -> usize {
        self.nu.iter().rposition(|&x| x > 0.0).map_or(0, |i| i + 1)
    }

    /// The weights with trailing zeros dropped.
    pub fn trimmed(&self) -> PolicyWeights {
        Self {
            nu: self.nu[..self.effective_m()].to_vec(),
        }
    }

    /// Keeps the newest `j` entries and renormalizes them.
    pub fn truncated(&self, j: usize) -> Result<PolicyWeights> {
        if j >= self.nu.len() {
            return Ok(self.clone());
        }
        if j == 0 {
            return Err(invalid("cannot truncate weights to zero entries"));
        }
        let head = &self.nu[..j];
        let total: f64 = head.iter().sum();
        if total <= 0.0 {
            return Err(invalid("truncated weights have no mass"));
        }
        Self::new(head.iter().map(|x| x / total).collect())
    }

    /// `E_{i~ν}[i + 1]`.
    pub fn expected_age_plus_one(&self) -> f64 {
        self.nu
            .iter()
            .enumerate()
            .map(|(i, w)| w * (i + 1) as f64)
            .sum()
    }

    /// `1 / Σ ν_i²`.
    pub fn ess_per_n(&self) -> f64 {
        1.0 / self.nu.iter().map(|w| w * w).sum::<f64>()
    }
}

/// `ESS = n / Σ ν_i²`.
pub fn effective_sample_size(nu: &PolicyWeights, n: usize) -> f64 {
    n as f64 * nu.ess_per_n()
}

/// `ε^GePPO = ε^PPO / E_{i~ν}[i + 1]`.
pub fn epsilon_mapping(nu: &PolicyWeights, eps_ppo: f64) -> Result<f64> {
    if !(eps_ppo > 0.0 && eps_ppo.is_finite()) {
        return Err(invalid(format!("eps_ppo must be positive, got {eps_ppo}")));
    }
    Ok(eps_ppo / nu.expected_age_plus_one())
}

/// Factor by which uniform weights over `M = B` policies increase the total
/// variation change per collected sample: `2B / (B + 1)`.
pub fn tv_factor_uniform(b: u32) -> Result<f64> {
    if b == 0 {
        return Err(invalid("B must be at least 1"));
    }
    Ok(2.0 * b as f64 / (b as f64 + 1.0))
}

/// Factor by which uniform weights over `M = 2B - 1` policies increase the
/// per-update sample size: `(2B - 1) / B`.
pub fn ess_factor_uniform(b: u32) -> Result<f64> {
    if b == 0 {
        return Err(invalid("B must be at least 1"));
    }
    Ok((2.0 * b as f64 - 1.0) / b as f64)
}
