//! Exact evaluation of the policy improvement bounds and TV identities.
//!
//! Every verifier returns a [`CertResult`] whose `slack` is nonnegative
//! exactly when the certified relation holds (up to the stated tolerance).

use serde::{Deserialize, Serialize};

use super::solve::{solve_policy, OracleReport};
use super::{ensure_same_shape, TabularMdp, TabularPolicy};
use crate::error::{invalid, shape, Error, Result};

/// Slack tolerance for inequalities between solved quantities.
pub const BOUND_TOL: f64 = 1e-9;
/// Tolerance for exact algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Outcome of one certified relation, emitted as `{lhs, rhs, slack, holds}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertResult {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

impl CertResult {
    /// Certifies `lhs >= rhs`.
    pub fn at_least(lhs: f64, rhs: f64) -> Self {
        let slack = lhs - rhs;
        Self {
            lhs,
            rhs,
            slack,
            holds: slack >= -BOUND_TOL,
        }
    }

    /// Certifies `lhs <= rhs`.
    pub fn at_most(lhs: f64, rhs: f64) -> Self {
        let slack = rhs - lhs;
        Self {
            lhs,
            rhs,
            slack,
            holds: slack >= -BOUND_TOL,
        }
    }

    /// Certifies `lhs == rhs` within `tol`; slack is `-|lhs - rhs|`.
    pub fn equal(lhs: f64, rhs: f64, tol: f64) -> Self {
        let gap = (lhs - rhs).abs();
        Self {
            lhs,
            rhs,
            slack: -gap,
            holds: gap < tol,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

/// The three supporting results used to prove the generalized bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportingReport {
    /// Performance difference equality.
    pub performance_difference: CertResult,
    /// Visitation distribution TV bound.
    pub visitation_tv: CertResult,
    /// Lower bound under an arbitrary reference policy.
    pub reference_bound: CertResult,
}

impl SupportingReport {
    pub fn holds(&self) -> bool {
        self.performance_difference.holds && self.visitation_tv.holds && self.reference_bound.holds
    }
}

/// The single-policy and multi-policy ratio forms of expected TV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub current: CertResult,
    pub mixture: CertResult,
}

impl IdentityReport {
    pub fn holds(&self) -> bool {
        self.current.holds && self.mixture.holds
    }
}

fn state_tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// `E_{s~d}[TV(π_a, π_b)(s)]`.
pub fn tv_state(pi_a: &TabularPolicy, pi_b: &TabularPolicy, d: &[f64]) -> Result<f64> {
    ensure_same_shape(pi_a, pi_b)?;
    if d.len() != pi_a.num_states() {
        return Err(shape("state distribution length differs from policy"));
    }
    Ok(d.iter()
        .enumerate()
        .map(|(s, w)| w * state_tv(pi_a.row(s), pi_b.row(s)))
        .sum())
}

fn penalty_from_report(pi: &TabularPolicy, current: &OracleReport) -> f64 {
    OracleReport::expect_actions(pi, &current.a)
        .into_iter()
        .fold(0.0, |m, x| m.max(x.abs()))
}

/// `C^{π,π_k} = max_s |E_{a~π}[A^{π_k}(s,a)]|`.
pub fn penalty_constant(mdp: &TabularMdp, pi: &TabularPolicy, pi_k: &TabularPolicy) -> Result<f64> {
    pi.check_against(mdp)?;
    let current = solve_policy(mdp, pi_k)?;
    Ok(penalty_from_report(pi, &current))
}

/// Fails unless `pi(a|s) > 0` implies `reference(a|s) > 0`.
fn check_support(pi: &TabularPolicy, reference: &TabularPolicy) -> Result<()> {
    ensure_same_shape(pi, reference)?;
    for s in 0..pi.num_states() {
        for a in 0..pi.num_actions() {
            if pi.prob(s, a) > 0.0 && reference.prob(s, a) == 0.0 {
                return Err(Error::SupportViolation {
                    state: s,
                    action: a,
                    detail: "reference policy has zero mass where the candidate has mass".into(),
                });
            }
        }
    }
    Ok(())
}

fn check_weights(nu: &[f64], m: usize) -> Result<()> {
    if nu.len() != m || m == 0 {
        return Err(shape(format!("{} weights for {m} policies", nu.len())));
    }
    if nu.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(invalid("policy weights must be nonnegative"));
    }
    let total: f64 = nu.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("policy weights sum to {total}")));
    }
    Ok(())
}

/// `Σ_s d(s) Σ_a ref(a|s) · pi(a|s)/ref(a|s) · f(s,a)`, the importance form.
fn ratio_expectation(
    d: &[f64],
    reference: &TabularPolicy,
    pi: &TabularPolicy,
    f: &[Vec<f64>],
) -> f64 {
    let mut total = 0.0;
    for (s, ds) in d.iter().enumerate() {
        for (a, fa) in f[s].iter().enumerate() {
            let b = reference.prob(s, a);
            if b > 0.0 {
                total += ds * b * (pi.prob(s, a) / b) * fa;
            }
        }
    }
    total
}

fn penalty_scale(gamma: f64, c: f64) -> f64 {
    2.0 * gamma * c / ((1.0 - gamma) * (1.0 - gamma))
}

/// Both sides of the standard policy improvement lower bound.
pub fn verify_lb_standard(
    mdp: &TabularMdp,
    pi_k: &TabularPolicy,
    pi: &TabularPolicy,
) -> Result<CertResult> {
    pi.check_against(mdp)?;
    pi_k.check_against(mdp)?;
    check_support(pi, pi_k)?;
    let gamma = mdp.gamma();
    let current = solve_policy(mdp, pi_k)?;
    let future = solve_policy(mdp, pi)?;
    let c = penalty_from_report(pi, &current);

    let surrogate = ratio_expectation(&current.d_pi, pi_k, pi, &current.a) / (1.0 - gamma);
    let tv = tv_state(pi, pi_k, &current.d_pi)?;
    let rhs = surrogate - penalty_scale(gamma, c) * tv;
    Ok(CertResult::at_least(future.j - current.j, rhs))
}

fn solve_priors(
    mdp: &TabularMdp,
    priors: &[TabularPolicy],
    pi: &TabularPolicy,
) -> Result<Vec<OracleReport>> {
    if priors.is_empty() {
        return Err(invalid("need at least one prior policy"));
    }
    pi.check_against(mdp)?;
    for prior in priors {
        prior.check_against(mdp)?;
        check_support(pi, prior)?;
        check_support(&priors[0], prior)?;
    }
    priors.iter().map(|p| solve_policy(mdp, p)).collect()
}

/// Both sides of the generalized (multi-policy) improvement lower bound.
/// `priors[i]` is `π_{k-i}`; `priors[0]` is the current policy.
pub fn verify_lb_generalized(
    mdp: &TabularMdp,
    priors: &[TabularPolicy],
    nu: &[f64],
    pi: &TabularPolicy,
) -> Result<CertResult> {
    let reports = solve_priors(mdp, priors, pi)?;
    check_weights(nu, priors.len())?;
    let gamma = mdp.gamma();
    let current = &reports[0];
    let future = solve_policy(mdp, pi)?;
    let c = penalty_from_report(pi, current);

    let mut surrogate = 0.0;
    let mut tv = 0.0;
    for ((prior, rep), w) in priors.iter().zip(&reports).zip(nu) {
        surrogate += w * ratio_expectation(&rep.d_pi, prior, pi, &current.a);
        tv += w * tv_state(pi, prior, &rep.d_pi)?;
    }
    let rhs = surrogate / (1.0 - gamma) - penalty_scale(gamma, c) * tv;
    Ok(CertResult::at_least(future.j - current.j, rhs))
}

/// Triangle-inequality decomposition of the multi-policy TV penalty into
/// the distance to the current policy plus consecutive prior distances.
pub fn verify_triangle_decomposition(
    mdp: &TabularMdp,
    priors: &[TabularPolicy],
    nu: &[f64],
    pi: &TabularPolicy,
) -> Result<CertResult> {
    let reports = solve_priors(mdp, priors, pi)?;
    check_weights(nu, priors.len())?;
    let m = priors.len();

    let mut lhs = 0.0;
    let mut to_current = 0.0;
    for i in 0..m {
        lhs += nu[i] * tv_state(pi, &priors[i], &reports[i].d_pi)?;
        to_current += nu[i] * tv_state(pi, &priors[0], &reports[i].d_pi)?;
    }
    let mut consecutive = 0.0;
    for j in 1..m {
        for i in j..m {
            // TV(π_{k-j+1}, π_{k-j}) under d^{π_{k-i}}
            consecutive += nu[i] * tv_state(&priors[j - 1], &priors[j], &reports[i].d_pi)?;
        }
    }
    Ok(CertResult::at_most(lhs, to_current + consecutive))
}

/// Performance-difference equality, visitation TV bound, and the
/// reference-policy lower bound, for current `pi_k`, future `pi`, reference `pi_ref`.
pub fn verify_supporting_bounds(
    mdp: &TabularMdp,
    pi_k: &TabularPolicy,
    pi: &TabularPolicy,
    pi_ref: &TabularPolicy,
) -> Result<SupportingReport> {
    pi.check_against(mdp)?;
    pi_k.check_against(mdp)?;
    pi_ref.check_against(mdp)?;
    check_support(pi, pi_ref)?;
    let gamma = mdp.gamma();
    let current = solve_policy(mdp, pi_k)?;
    let future = solve_policy(mdp, pi)?;
    let reference = solve_policy(mdp, pi_ref)?;
    let improvement = future.j - current.j;

    let mean_adv = OracleReport::expect_actions(pi, &current.a);
    let pd_rhs: f64 = future
        .d_pi
        .iter()
        .zip(&mean_adv)
        .map(|(d, x)| d * x)
        .sum::<f64>()
        / (1.0 - gamma);
    let performance_difference = CertResult::equal(improvement, pd_rhs, BOUND_TOL);

    let tv_ref = tv_state(pi, pi_ref, &reference.d_pi)?;
    let visitation_tv = CertResult::at_most(
        state_tv(&future.d_pi, &reference.d_pi),
        gamma / (1.0 - gamma) * tv_ref,
    );

    let c = penalty_from_report(pi, &current);
    let surrogate = ratio_expectation(&reference.d_pi, pi_ref, pi, &current.a) / (1.0 - gamma);
    let reference_bound =
        CertResult::at_least(improvement, surrogate - penalty_scale(gamma, c) * tv_ref);

    Ok(SupportingReport {
        performance_difference,
        visitation_tv,
        reference_bound,
    })
}

/// Ratio forms of expected TV: `E_{d^{π_k}}[TV(π,π_k)] = ½E|π/π_k − 1|` and the
/// ν-mixture version with ratios against each prior policy.
pub fn verify_tv_ratio_identities(
    mdp: &TabularMdp,
    priors: &[TabularPolicy],
    nu: &[f64],
    pi: &TabularPolicy,
) -> Result<IdentityReport> {
    let reports = solve_priors(mdp, priors, pi)?;
    check_weights(nu, priors.len())?;
    let pi_k = &priors[0];

    let current_lhs = tv_state(pi, pi_k, &reports[0].d_pi)?;
    let current_rhs = 0.5 * ratio_abs_gap(&reports[0].d_pi, pi_k, pi, pi_k);
    let current = CertResult::equal(current_lhs, current_rhs, IDENTITY_TOL);

    let mut mix_lhs = 0.0;
    let mut mix_rhs = 0.0;
    for ((prior, rep), w) in priors.iter().zip(&reports).zip(nu) {
        mix_lhs += w * tv_state(pi, pi_k, &rep.d_pi)?;
        mix_rhs += w * 0.5 * ratio_abs_gap(&rep.d_pi, prior, pi, pi_k);
    }
    let mixture = CertResult::equal(mix_lhs, mix_rhs, IDENTITY_TOL);
    Ok(IdentityReport { current, mixture })
}

/// `E_{(s,a)~d·behavior}|pi/behavior − center/behavior|`.
pub(crate) fn ratio_abs_gap(
    d: &[f64],
    behavior: &TabularPolicy,
    pi: &TabularPolicy,
    center: &TabularPolicy,
) -> f64 {
    let mut total = 0.0;
    for (s, ds) in d.iter().enumerate() {
        for a in 0..behavior.num_actions() {
            let b = behavior.prob(s, a);
            if b > 0.0 {
                total += ds * b * (pi.prob(s, a) / b - center.prob(s, a) / b).abs();
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::random::{random_instance, random_mdp, random_policy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_state(na: usize) -> TabularMdp {
        TabularMdp::new(
            vec![vec![vec![1.0]; na]],
            vec![(0..na).map(|a| a as f64).collect()],
            vec![1.0],
            0.7,
        )
        .unwrap()
    }

    #[test]
    fn tv_state_examples() {
        let a = TabularPolicy::new(vec![vec![1.0, 0.0]]).unwrap();
        let b = TabularPolicy::new(vec![vec![0.0, 1.0]]).unwrap();
        assert_eq!(tv_state(&a, &a, &[1.0]).unwrap(), 0.0);
        assert_eq!(tv_state(&a, &b, &[1.0]).unwrap(), 1.0);
        let c = TabularPolicy::new(vec![vec![0.7, 0.3]]).unwrap();
        let d = TabularPolicy::new(vec![vec![0.5, 0.5]]).unwrap();
        assert!((tv_state(&c, &d, &[1.0]).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn penalty_constant_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mdp = random_mdp(&mut rng, 4, 3, 0.8);
        let pi_k = random_policy(&mut rng, 4, 3);
        assert!(penalty_constant(&mdp, &pi_k, &pi_k).unwrap() < 1e-12);

        // Single state, single action: the advantage vanishes identically.
        let single =
            TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![3.0]], vec![1.0], 0.6).unwrap();
        let p = TabularPolicy::uniform(1, 1);
        assert_eq!(penalty_constant(&single, &p, &p).unwrap(), 0.0);

        let pi = random_policy(&mut rng, 4, 3);
        let rep = solve_policy(&mdp, &pi_k).unwrap();
        let mut brute: f64 = 0.0;
        for s in 0..4 {
            let mut e = 0.0;
            for a in 0..3 {
                e += pi.prob(s, a) * rep.a[s][a];
            }
            brute = brute.max(e.abs());
        }
        assert_eq!(penalty_constant(&mdp, &pi, &pi_k).unwrap(), brute);
    }

    #[test]
    fn standard_bound_identity_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let pi = random_policy(&mut rng, 5, 3);
        let cert = verify_lb_standard(&mdp, &pi, &pi).unwrap();
        assert!(cert.lhs.abs() < 1e-12);
        assert!(cert.rhs.abs() < 1e-12);
        assert!(cert.holds);
    }

    #[test]
    fn standard_bound_first_order_tightness() {
        // Along π_t = (1-t)π_k + tπ, both the improvement and the surrogate
        // have the same derivative at t = 0.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mdp = random_mdp(&mut rng, 4, 3, 0.8);
        let pi_k = random_policy(&mut rng, 4, 3);
        let target = random_policy(&mut rng, 4, 3);
        let gamma = mdp.gamma();
        let current = solve_policy(&mdp, &pi_k).unwrap();
        let mut prev_gap = f64::INFINITY;
        for t in [1e-2, 1e-3, 1e-4] {
            let pi = pi_k.interpolate(&target, t).unwrap();
            let lhs = solve_policy(&mdp, &pi).unwrap().j - current.j;
            let surrogate =
                ratio_expectation(&current.d_pi, &pi_k, &pi, &current.a) / (1.0 - gamma);
            let gap = (lhs - surrogate).abs() / t;
            assert!(gap < prev_gap);
            prev_gap = gap;
            assert!(verify_lb_standard(&mdp, &pi_k, &pi).unwrap().holds);
        }
        assert!(prev_gap < 1e-2, "relative first-order gap {prev_gap}");
    }

    #[test]
    fn generalized_with_one_policy_matches_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 6, 4, 1);
            let a = verify_lb_standard(&inst.mdp, &inst.priors[0], &inst.candidate).unwrap();
            let b =
                verify_lb_generalized(&inst.mdp, &inst.priors, &[1.0], &inst.candidate).unwrap();
            assert!((a.lhs - b.lhs).abs() < 1e-12);
            assert!((a.rhs - b.rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn generalized_at_current_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let inst = random_instance(&mut rng, 5, 3, 4);
        let cert =
            verify_lb_generalized(&inst.mdp, &inst.priors, &inst.nu, &inst.priors[0]).unwrap();
        assert!(cert.lhs.abs() < 1e-12);
        assert!(cert.rhs <= 1e-12);
    }

    #[test]
    fn triangle_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mdp = random_mdp(&mut rng, 4, 3, 0.85);
        let pi_k = random_policy(&mut rng, 4, 3);
        let pi = random_policy(&mut rng, 4, 3);
        let d = solve_policy(&mdp, &pi_k).unwrap().d_pi;
        let expected = tv_state(&pi, &pi_k, &d).unwrap();

        let one =
            verify_triangle_decomposition(&mdp, std::slice::from_ref(&pi_k), &[1.0], &pi).unwrap();
        assert!((one.lhs - expected).abs() < 1e-15);
        assert!((one.rhs - expected).abs() < 1e-15);

        let same = vec![pi_k.clone(); 3];
        let cert = verify_triangle_decomposition(&mdp, &same, &[0.5, 0.3, 0.2], &pi).unwrap();
        assert!((cert.lhs - cert.rhs).abs() < 1e-15);
    }

    #[test]
    fn supporting_bounds_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mdp = random_mdp(&mut rng, 5, 2, 0.75);
        let pi = random_policy(&mut rng, 5, 2);
        let rep = verify_supporting_bounds(&mdp, &pi, &pi, &pi).unwrap();
        assert!(rep.holds());
        assert!(rep.performance_difference.slack.abs() < 1e-12);

        // With the reference equal to the current policy the reference bound
        // coincides with the standard bound.
        let other = random_policy(&mut rng, 5, 2);
        let rep = verify_supporting_bounds(&mdp, &pi, &other, &pi).unwrap();
        let std = verify_lb_standard(&mdp, &pi, &other).unwrap();
        assert!((rep.reference_bound.rhs - std.rhs).abs() < 1e-12);
        assert!((rep.reference_bound.lhs - std.lhs).abs() < 1e-12);
    }

    #[test]
    fn identities_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let inst = random_instance(&mut rng, 5, 3, 3);
        let rep =
            verify_tv_ratio_identities(&inst.mdp, &inst.priors, &inst.nu, &inst.priors[0]).unwrap();
        assert_eq!(rep.current.lhs, 0.0);
        assert_eq!(rep.current.rhs, 0.0);
        assert_eq!(rep.mixture.lhs, 0.0);
        assert_eq!(rep.mixture.rhs, 0.0);

        let single =
            verify_tv_ratio_identities(&inst.mdp, &inst.priors[..1], &[1.0], &inst.candidate)
                .unwrap();
        assert!((single.current.lhs - single.mixture.lhs).abs() < 1e-15);
        assert!((single.current.rhs - single.mixture.rhs).abs() < 1e-15);
    }

    #[test]
    fn support_violation_rejected() {
        let mdp = one_state(2);
        let pi_k = TabularPolicy::new(vec![vec![1.0, 0.0]]).unwrap();
        let pi = TabularPolicy::new(vec![vec![0.5, 0.5]]).unwrap();
        assert!(matches!(
            verify_lb_standard(&mdp, &pi_k, &pi),
            Err(Error::SupportViolation {
                state: 0,
                action: 1,
                ..
            })
        ));
        assert!(
            verify_tv_ratio_identities(&mdp, &[pi.clone(), pi_k.clone()], &[0.5, 0.5], &pi)
                .is_err()
        );
    }

    #[test]
    fn weights_must_be_distribution() {
        let mdp = one_state(2);
        let p = TabularPolicy::uniform(1, 2);
        assert!(verify_lb_generalized(&mdp, &[p.clone(), p.clone()], &[0.7, 0.7], &p).is_err());
        assert!(verify_lb_generalized(&mdp, &[p.clone(), p.clone()], &[1.0], &p).is_err());
    }
}
