//! Exact dynamic programming on small finite MDPs.
//!
//! Everything here is computed by dense direct solves, so the quantities
//! (values, advantages, visitation distributions) are exact up to floating
//! point. The verifiers in [`bounds`] evaluate both sides of each policy
//! improvement bound and identity on these exact quantities.

pub mod bounds;
pub mod random;
mod solve;

pub use bounds::{
    penalty_constant, tv_state, verify_lb_generalized, verify_lb_standard,
    verify_supporting_bounds, verify_triangle_decomposition, verify_tv_ratio_identities,
    CertResult, IdentityReport, SupportingReport,
};
pub use solve::{solve_policy, OracleReport};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};

/// Tolerance for probability rows summing to one.
pub const PROB_TOL: f64 = 1e-12;

/// A finite discounted MDP.
///
/// Serialized as `{gamma, rho0, reward[s][a], transition[s][a][s']}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDoc", into = "MdpDoc")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    rho0: Vec<f64>,
    reward: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct MdpDoc {
    gamma: f64,
    rho0: Vec<f64>,
    reward: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<MdpDoc> for TabularMdp {
    type Error = crate::Error;

    fn try_from(doc: MdpDoc) -> Result<Self> {
        TabularMdp::new(doc.transition, doc.reward, doc.rho0, doc.gamma)
    }
}

impl From<TabularMdp> for MdpDoc {
    fn from(m: TabularMdp) -> Self {
        MdpDoc {
            gamma: m.gamma,
            rho0: m.rho0,
            reward: m.reward,
            transition: m.transition,
        }
    }
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(invalid(format!(
                "{what}: entry {p} is not a nonnegative finite number"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(invalid(format!("{what}: sums to {sum}, expected 1")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        rho0: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let num_states = transition.len();
        if num_states == 0 {
            return Err(invalid("MDP needs at least one state"));
        }
        let num_actions = transition[0].len();
        if num_actions == 0 {
            return Err(invalid("MDP needs at least one action"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("gamma {gamma} outside [0, 1)")));
        }
        if rho0.len() != num_states {
            return Err(shape(format!(
                "rho0 has {} entries for {num_states} states",
                rho0.len()
            )));
        }
        check_distribution(&rho0, "rho0")?;
        if reward.len() != num_states {
            return Err(shape("reward rows must match number of states"));
        }
        for (s, (rows, r)) in transition.iter().zip(&reward).enumerate() {
            if rows.len() != num_actions || r.len() != num_actions {
                return Err(shape(format!("state {s}: expected {num_actions} actions")));
            }
            if let Some(x) = r.iter().find(|x| !x.is_finite()) {
                return Err(invalid(format!("state {s}: reward {x} is not finite")));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != num_states {
                    return Err(shape(format!("P[{s}][{a}] has {} entries", row.len())));
                }
                check_distribution(row, &format!("P[{s}][{a}]"))?;
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            gamma,
            rho0,
            reward,
            transition,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho0(&self) -> &[f64] {
        &self.rho0
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    /// `P[s][a][·]`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("MDP serialization cannot fail")
    }
}

/// A stationary stochastic policy `π[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TabularPolicy {
    probs: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for TabularPolicy {
    type Error = crate::Error;

    fn try_from(probs: Vec<Vec<f64>>) -> Result<Self> {
        TabularPolicy::new(probs)
    }
}

impl From<TabularPolicy> for Vec<Vec<f64>> {
    fn from(p: TabularPolicy) -> Self {
        p.probs
    }
}

impl TabularPolicy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.is_empty() || probs[0].is_empty() {
            return Err(invalid(
                "policy must have at least one state and one action",
            ));
        }
        let na = probs[0].len();
        for (s, row) in probs.iter().enumerate() {
            if row.len() != na {
                return Err(shape(format!(
                    "policy row {s} has {} actions, expected {na}",
                    row.len()
                )));
            }
            check_distribution(row, &format!("pi[{s}]"))?;
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self {
            probs: vec![vec![p; num_actions]; num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    /// Pointwise mixture `(1 - t)·self + t·other`.
    pub fn interpolate(&self, other: &TabularPolicy, t: f64) -> Result<Self> {
        ensure_same_shape(self, other)?;
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (1.0 - t) * x + t * y)
                    .collect()
            })
            .collect();
        TabularPolicy::new(probs)
    }

    pub(crate) fn check_against(&self, mdp: &TabularMdp) -> Result<()> {
        if self.num_states() != mdp.num_states() || self.num_actions() != mdp.num_actions() {
            return Err(shape(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.num_states(),
                self.num_actions(),
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }
}

pub(crate) fn ensure_same_shape(a: &TabularPolicy, b: &TabularPolicy) -> Result<()> {
    if a.num_states() != b.num_states() || a.num_actions() != b.num_actions() {
        return Err(shape("policies differ in shape"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> TabularMdp {
        TabularMdp::new(
            vec![
                vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                vec![vec![0.5, 0.5], vec![0.0, 1.0]],
            ],
            vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            vec![0.5, 0.5],
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip() {
        let mdp = two_state();
        let back = TabularMdp::from_json(&mdp.to_json()).unwrap();
        assert_eq!(mdp, back);
    }

    #[test]
    fn rejects_bad_rows() {
        let err = TabularMdp::new(
            vec![vec![vec![0.5, 0.4]], vec![vec![0.5, 0.5]]],
            vec![vec![0.0], vec![0.0]],
            vec![1.0, 0.0],
            0.5,
        );
        assert!(err.is_err());
        let neg = TabularPolicy::new(vec![vec![1.2, -0.2]]);
        assert!(neg.is_err());
    }

    #[test]
    fn rejects_gamma_one() {
        let err = TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![1.0]], vec![1.0], 1.0);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_malformed_json() {
        assert!(TabularMdp::from_json(r#"{"gamma":0.5,"rho0":[1],"reward":[[1]]}"#).is_err());
        assert!(TabularMdp::from_json(
            r#"{"gamma":0.5,"rho0":[1],"reward":[[1]],"transition":[[[0.5]]]}"#
        )
        .is_err());
    }
}
