use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{TabularMdp, TabularPolicy};
use crate::error::{Error, Result};

/// Residual bound accepted from the direct solves.
const RESIDUAL_TOL: f64 = 1e-9;

/// Exact performance quantities of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// `J(π) = Σ_s ρ0(s) V(s)`.
    pub j: f64,
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    /// Normalized discounted state visitation distribution.
    pub d_pi: Vec<f64>,
}

impl OracleReport {
    /// `Σ_a π(a|s) f(s,a)` for every state.
    pub fn expect_actions(pi: &TabularPolicy, f: &[Vec<f64>]) -> Vec<f64> {
        (0..pi.num_states())
            .map(|s| pi.row(s).iter().zip(&f[s]).map(|(p, x)| p * x).sum())
            .collect()
    }
}

fn policy_matrices(mdp: &TabularMdp, pi: &TabularPolicy) -> (DMatrix<f64>, DVector<f64>) {
    let ns = mdp.num_states();
    let mut p_pi = DMatrix::<f64>::zeros(ns, ns);
    let mut r_pi = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        for a in 0..mdp.num_actions() {
            let w = pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            r_pi[s] += w * mdp.reward(s, a);
            for (sp, p) in mdp.transition_row(s, a).iter().enumerate() {
                p_pi[(s, sp)] += w * p;
            }
        }
    }
    (p_pi, r_pi)
}

fn solve_checked(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let x = m.clone().lu().solve(rhs).ok_or(Error::SolveFailed {
        residual: f64::INFINITY,
    })?;
    let residual = (m * &x - rhs).amax();
    if !residual.is_finite() || residual > RESIDUAL_TOL {
        return Err(Error::SolveFailed { residual });
    }
    Ok(x)
}

/// Solves the Bellman and visitation linear systems of `pi` in `mdp`.
///
/// `V = (I - γP_π)^{-1} r_π` and `d_π = (1-γ) ρ0ᵀ (I - γP_π)^{-1}`.
pub fn solve_policy(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<OracleReport> {
    pi.check_against(mdp)?;
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let gamma = mdp.gamma();
    let (p_pi, r_pi) = policy_matrices(mdp, pi);
    let system = DMatrix::<f64>::identity(ns, ns) - &p_pi * gamma;

    let v = solve_checked(&system, &r_pi)?;
    let rho0 = DVector::from_column_slice(mdp.rho0());
    let occupancy = solve_checked(&system.transpose(), &rho0)?;
    let d_pi: Vec<f64> = occupancy.iter().map(|x| (1.0 - gamma) * x).collect();

    let mut q = vec![vec![0.0; na]; ns];
    let mut adv = vec![vec![0.0; na]; ns];
    for s in 0..ns {
        for a in 0..na {
            let next: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(v.iter())
                .map(|(p, x)| p * x)
                .sum();
            q[s][a] = mdp.reward(s, a) + gamma * next;
            adv[s][a] = q[s][a] - v[s];
        }
    }
    let j = rho0.dot(&v);
    Ok(OracleReport {
        j,
        v: v.iter().copied().collect(),
        q,
        a: adv,
        d_pi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::random::{random_mdp, random_policy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent value iteration run to a fixed point.
    fn value_iteration(mdp: &TabularMdp, pi: &TabularPolicy) -> Vec<f64> {
        let ns = mdp.num_states();
        let mut v = vec![0.0; ns];
        loop {
            let mut next = vec![0.0; ns];
            for (s, slot) in next.iter_mut().enumerate() {
                for a in 0..mdp.num_actions() {
                    let ev: f64 = mdp
                        .transition_row(s, a)
                        .iter()
                        .zip(&v)
                        .map(|(p, x)| p * x)
                        .sum();
                    *slot += pi.prob(s, a) * (mdp.reward(s, a) + mdp.gamma() * ev);
                }
            }
            let delta = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            if delta < 1e-13 {
                return v;
            }
        }
    }

    #[test]
    fn single_state_geometric_series() {
        let mdp = TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![1.0]], vec![1.0], 0.5).unwrap();
        let pi = TabularPolicy::uniform(1, 1);
        let rep = solve_policy(&mdp, &pi).unwrap();
        assert!((rep.j - 2.0).abs() < 1e-12);
        assert!((rep.v[0] - 2.0).abs() < 1e-12);
        assert!((rep.d_pi[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_value_iteration_and_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let mdp = random_mdp(&mut rng, 5, 3, 0.9);
            let pi = random_policy(&mut rng, 5, 3);
            let rep = solve_policy(&mdp, &pi).unwrap();
            let vi = value_iteration(&mdp, &pi);
            for (a, b) in rep.v.iter().zip(&vi) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            assert!((rep.d_pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let j: f64 = mdp.rho0().iter().zip(&rep.v).map(|(p, v)| p * v).sum();
            assert!((rep.j - j).abs() < 1e-9);
            let mean_adv = OracleReport::expect_actions(&pi, &rep.a);
            for (s, m) in mean_adv.iter().enumerate() {
                assert!(m.abs() < 1e-9);
                for a in 0..3 {
                    assert!((rep.a[s][a] - (rep.q[s][a] - rep.v[s])).abs() < 1e-9);
                }
            }
            let under_d: f64 = rep.d_pi.iter().zip(&mean_adv).map(|(d, m)| d * m).sum();
            assert!(under_d.abs() < 1e-9);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mdp = TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![1.0]], vec![1.0], 0.5).unwrap();
        let pi = TabularPolicy::uniform(1, 2);
        assert!(solve_policy(&mdp, &pi).is_err());
    }
}
