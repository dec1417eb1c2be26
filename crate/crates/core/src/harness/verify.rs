use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::estimation::{gae, vtrace, EstimatorConfig, Segment};
use crate::objective::tv_estimate;
use crate::tabular::random::{random_instance, random_mdp, random_policy};
use crate::tabular::{
    solve_policy, tv_state, verify_lb_generalized, verify_lb_standard, verify_supporting_bounds,
    verify_triangle_decomposition, verify_tv_ratio_identities, CertResult, TabularMdp,
    TabularPolicy,
};
use crate::weights::{
    epsilon_mapping, ess_factor_uniform, grid_oracle, tv_factor_uniform, PolicyWeights,
    WeightProgram,
};

pub const DEFAULT_SEED: u64 = 0x5eed;
pub const BOUND_CASES: usize = 100;
pub const ESTIMATOR_CASES: usize = 50;
const BOUND_SLACK: f64 = -1e-9;
const IDENTITY_TOL: f64 = 1e-12;
const GAE_TOL: f64 = 1e-10;
const WEIGHT_TOL: f64 = 1e-6;
const GRID_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Bounds,
    Identities,
    Weights,
    Estimators,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 5] = ["bounds", "identities", "weights", "estimators", "all"];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Bounds => "bounds",
            Suite::Identities => "identities",
            Suite::Weights => "weights",
            Suite::Estimators => "estimators",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bounds" => Ok(Suite::Bounds),
            "identities" => Ok(Suite::Identities),
            "weights" => Ok(Suite::Weights),
            "estimators" => Ok(Suite::Estimators),
            "all" => Ok(Suite::All),
            other => Err(invalid(format!(
                "unknown suite {other:?}; expected one of {}",
                Suite::NAMES.join(", ")
            ))),
        }
    }
}

/// Aggregate of one named check over its cases.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Smallest slack seen; negative means violated by that much.
    pub worst_slack: f64,
    pub passed: bool,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            cases: 0,
            failures: 0,
            worst_slack: f64::INFINITY,
            passed: true,
        }
    }

    /// Records one case; `ok` decides pass or fail.
    fn record(&mut self, slack: f64, ok: bool) {
        self.cases += 1;
        self.worst_slack = self.worst_slack.min(if slack.is_nan() {
            f64::NEG_INFINITY
        } else {
            slack
        });
        if !ok || slack.is_nan() {
            self.failures += 1;
            self.passed = false;
        }
    }

    fn bound(&mut self, c: &CertResult) {
        self.record(c.slack, c.slack >= BOUND_SLACK);
    }

    /// Equality within `tol`; slack is `tol - |gap|`.
    fn close(&mut self, got: f64, want: f64, tol: f64) {
        let gap = (got - want).abs();
        self.record(-gap, gap <= tol);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Runs `suite` with instances drawn from `seed`.
pub fn verify(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if matches!(suite, Suite::Bounds | Suite::All) {
        checks.extend(bounds_suite(&mut rng, BOUND_CASES)?);
    }
    if matches!(suite, Suite::Identities | Suite::All) {
        checks.extend(identities_suite(&mut rng, BOUND_CASES)?);
    }
    if matches!(suite, Suite::Weights | Suite::All) {
        checks.extend(weights_suite()?);
    }
    if matches!(suite, Suite::Estimators | Suite::All) {
        checks.extend(estimators_suite(&mut rng, ESTIMATOR_CASES)?);
    }
    Ok(SuiteReport {
        suite,
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

pub fn bounds_suite(rng: &mut ChaCha8Rng, cases: usize) -> Result<Vec<CheckReport>> {
    let mut standard = CheckReport::new("lb_standard");
    let mut generalized = CheckReport::new("lb_generalized");
    let mut triangle = CheckReport::new("triangle_decomposition");
    let mut perf_diff = CheckReport::new("performance_difference");
    let mut visitation = CheckReport::new("visitation_tv");
    let mut reference = CheckReport::new("reference_bound");
    for _ in 0..cases {
        let inst = random_instance(rng, 6, 4, 4);
        standard.bound(&verify_lb_standard(
            &inst.mdp,
            &inst.priors[0],
            &inst.candidate,
        )?);
        generalized.bound(&verify_lb_generalized(
            &inst.mdp,
            &inst.priors,
            &inst.nu,
            &inst.candidate,
        )?);
        triangle.bound(&verify_triangle_decomposition(
            &inst.mdp,
            &inst.priors,
            &inst.nu,
            &inst.candidate,
        )?);
        let app =
            verify_supporting_bounds(&inst.mdp, &inst.priors[0], &inst.candidate, &inst.reference)?;
        perf_diff.close(
            app.performance_difference.lhs,
            app.performance_difference.rhs,
            1e-9,
        );
        visitation.bound(&app.visitation_tv);
        reference.bound(&app.reference_bound);
    }
    Ok(vec![
        standard,
        generalized,
        triangle,
        perf_diff,
        visitation,
        reference,
    ])
}

/// Exact enumeration of the sample-based TV estimate: every `(i, s, a)`
/// becomes one weighted sample with weight `ν_i d_i(s) π_i(a|s)`.
pub fn enumerated_tv_estimate(
    mdp: &TabularMdp,
    priors: &[TabularPolicy],
    nu: &[f64],
    pi: &TabularPolicy,
) -> Result<(f64, f64)> {
    let pi_k = &priors[0];
    let mut weights = Vec::new();
    let mut ratio = Vec::new();
    let mut center = Vec::new();
    let mut expected = 0.0;
    for (prior, &w) in priors.iter().zip(nu) {
        let d = solve_policy(mdp, prior)?.d_pi;
        expected += w * tv_state(pi, pi_k, &d)?;
        for (s, ds) in d.iter().enumerate() {
            for a in 0..mdp.num_actions() {
                let b = prior.prob(s, a);
                weights.push(w * ds * b);
                ratio.push(pi.prob(s, a) / b);
                center.push(pi_k.prob(s, a) / b);
            }
        }
    }
    Ok((tv_estimate(&weights, &ratio, &center)?, expected))
}

pub fn identities_suite(rng: &mut ChaCha8Rng, cases: usize) -> Result<Vec<CheckReport>> {
    let mut current = CheckReport::new("tv_ratio_current");
    let mut mixture = CheckReport::new("tv_ratio_mixture");
    let mut estimate = CheckReport::new("tv_estimate_enumerated");
    for _ in 0..cases {
        let inst = random_instance(rng, 6, 4, 4);
        let rep = verify_tv_ratio_identities(&inst.mdp, &inst.priors, &inst.nu, &inst.candidate)?;
        current.close(rep.current.lhs, rep.current.rhs, IDENTITY_TOL);
        mixture.close(rep.mixture.lhs, rep.mixture.rhs, IDENTITY_TOL);
        let (est, exact) =
            enumerated_tv_estimate(&inst.mdp, &inst.priors, &inst.nu, &inst.candidate)?;
        estimate.close(est, exact, IDENTITY_TOL);
    }
    Ok(vec![current, mixture, estimate])
}

fn objective(program: WeightProgram, nu: &[f64]) -> f64 {
    match program {
        WeightProgram::Tvopt => nu.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum(),
        _ => nu.iter().map(|x| x * x).sum(),
    }
}

pub fn weights_suite() -> Result<Vec<CheckReport>> {
    let mut essopt = CheckReport::new("essopt_b2");
    let expected = [0.4, 0.3, 0.2, 0.1];
    for m_bar in 5..=10 {
        let nu = WeightProgram::Essopt.solve(2.0, m_bar)?;
        for (i, &x) in nu.as_slice().iter().enumerate() {
            essopt.close(x, expected.get(i).copied().unwrap_or(0.0), WEIGHT_TOL);
        }
        essopt.record(0.0, nu.effective_m() == 4);
        essopt.close(epsilon_mapping(&nu, 0.2)?, 0.1, IDENTITY_TOL);
    }

    let mut tvopt = CheckReport::new("tvopt_b2");
    let nu = WeightProgram::Tvopt.solve(2.0, 3)?;
    for (x, want) in nu.as_slice().iter().zip([0.622008, 0.333333, 0.044658]) {
        tvopt.close(*x, want, 1e-5);
    }

    let mut grid = CheckReport::new("grid_oracle");
    // The TV program's feasible set is curved, so it needs a finer grid.
    for (program, b, m_bar, step) in [
        (WeightProgram::Essopt, 2.0, 5, 1e-2),
        (WeightProgram::Essopt, 1.5, 4, 1e-2),
        (WeightProgram::Tvopt, 2.0, 3, 1e-3),
        (WeightProgram::Tvopt, 1.5, 3, 1e-3),
    ] {
        let exact = objective(program, program.solve(b, m_bar)?.as_slice());
        let g = grid_oracle(program, b, m_bar, step)?;
        grid.close(g.objective, exact, GRID_TOL);
    }

    let mut factors = CheckReport::new("uniform_factors");
    factors.close(tv_factor_uniform(2)?, 4.0 / 3.0, 0.0);
    factors.close(ess_factor_uniform(2)?, 1.5, 0.0);
    factors.close(tv_factor_uniform(1)?, 1.0, 0.0);
    factors.close(ess_factor_uniform(1)?, 1.0, 0.0);

    let mut mapping = CheckReport::new("epsilon_mapping");
    mapping.close(epsilon_mapping(&PolicyWeights::uniform(1), 0.2)?, 0.2, 0.0);
    for b in 1..=4 {
        let nu = WeightProgram::Uniform.solve(b as f64, 2 * b - 1)?;
        mapping.close(epsilon_mapping(&nu, 0.2)?, 0.2 / b as f64, IDENTITY_TOL);
    }
    Ok(vec![essopt, tvopt, grid, factors, mapping])
}

/// `Â_t = Σ_{l≥0} (γλ)^l δ_{t+l}` summed directly up to the episode end.
pub fn brute_force_gae(seg: &Segment<'_>, cfg: &EstimatorConfig) -> Vec<f64> {
    let delta = seg.td_residuals(cfg.gamma);
    (0..seg.len())
        .map(|t| {
            let mut sum = 0.0;
            let mut k = t;
            loop {
                sum += (cfg.gamma * cfg.lambda).powi((k - t) as i32) * delta[k];
                if seg.done[k] || k + 1 == seg.len() {
                    break sum;
                }
                k += 1;
            }
        })
        .collect()
}

struct OwnedSegment {
    rewards: Vec<f64>,
    values: Vec<f64>,
    next_values: Vec<f64>,
    terminal: Vec<bool>,
    done: Vec<bool>,
}

impl OwnedSegment {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let t = rng.random_range(1..=64);
        let values: Vec<f64> = (0..t).map(|_| rng.random_range(-5.0..5.0)).collect();
        let terminal: Vec<bool> = (0..t).map(|_| rng.random_bool(0.05)).collect();
        let done = terminal
            .iter()
            .map(|&x| x || rng.random_bool(0.05))
            .collect();
        Self {
            rewards: (0..t).map(|_| rng.random_range(-2.0..2.0)).collect(),
            next_values: (0..t)
                .map(|i| {
                    values
                        .get(i + 1)
                        .copied()
                        .unwrap_or_else(|| rng.random_range(-5.0..5.0))
                })
                .collect(),
            values,
            terminal,
            done,
        }
    }

    fn view(&self) -> Segment<'_> {
        Segment {
            rewards: &self.rewards,
            values: &self.values,
            next_values: &self.next_values,
            terminal: &self.terminal,
            done: &self.done,
        }
    }
}

pub fn estimators_suite(rng: &mut ChaCha8Rng, cases: usize) -> Result<Vec<CheckReport>> {
    let mut brute = CheckReport::new("gae_brute_force");
    let mut on_policy = CheckReport::new("vtrace_on_policy");
    for _ in 0..cases {
        let seg = OwnedSegment::random(rng);
        let cfg = EstimatorConfig {
            gamma: rng.random_range(0.8..1.0),
            lambda: rng.random_range(0.0..=1.0),
            c_bar: 1.0,
        };
        let g = gae(&seg.view(), &cfg)?;
        for (a, b) in g.advantages.iter().zip(brute_force_gae(&seg.view(), &cfg)) {
            brute.close(*a, b, GAE_TOL);
        }
        let lp: Vec<f64> = (0..seg.rewards.len())
            .map(|_| rng.random_range(-3.0..0.0))
            .collect();
        let v = vtrace(&seg.view(), &lp, &lp, &cfg)?;
        for (a, b) in v.advantages.iter().zip(&g.advantages) {
            on_policy.close(*a, *b, IDENTITY_TOL);
        }
        for (a, b) in v.targets.iter().zip(&g.targets) {
            on_policy.close(*a, *b, IDENTITY_TOL);
        }
    }
    let mut mc = CheckReport::new("vtrace_monte_carlo");
    for r in vtrace_monte_carlo(rng.random(), 100_000)? {
        mc.record(
            3.0 * r.stderr - (r.mean - r.exact).abs(),
            (r.mean - r.exact).abs() <= 3.0 * r.stderr,
        );
    }
    Ok(vec![brute, on_policy, mc])
}

/// Monte Carlo estimate of `E[Â_0 | s_0, a_0]` for one state-action pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub state: usize,
    pub action: usize,
    pub exact: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Checks that V-trace advantages with `V = V^{π_k}` and no truncation are
/// unbiased for `A^{π_k}(s, a)` on a random 3-state, 2-action MDP. Each pair
/// is started `samples` times and continued under a behavior policy; the
/// horizon cut bootstraps from `V`, so it adds no bias.
pub fn vtrace_monte_carlo(seed: u64, samples: usize) -> Result<Vec<McEstimate>> {
    const HORIZON: usize = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ns, na) = (3, 2);
    let mdp = random_mdp(&mut rng, ns, na, 0.8);
    let pi_k = random_policy(&mut rng, ns, na);
    let other = random_policy(&mut rng, ns, na);
    let behavior = pi_k.interpolate(&other, 0.5)?;
    let oracle = solve_policy(&mdp, &pi_k)?;
    let cfg = EstimatorConfig {
        gamma: mdp.gamma(),
        lambda: 0.9,
        c_bar: 1e6,
    };

    let sample = |rng: &mut ChaCha8Rng, probs: &[f64]| -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    };

    let mut rewards = vec![0.0; HORIZON];
    let mut values = vec![0.0; HORIZON];
    let mut next_values = vec![0.0; HORIZON];
    let terminal = vec![false; HORIZON];
    let mut done = vec![false; HORIZON];
    done[HORIZON - 1] = true;
    let mut lp_cur = vec![0.0; HORIZON];
    let mut lp_beh = vec![0.0; HORIZON];

    let mut out = Vec::new();
    for s0 in 0..ns {
        for a0 in 0..na {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..samples {
                let (mut s, mut a) = (s0, a0);
                for t in 0..HORIZON {
                    let s_next = sample(&mut rng, mdp.transition_row(s, a));
                    rewards[t] = mdp.reward(s, a);
                    values[t] = oracle.v[s];
                    next_values[t] = oracle.v[s_next];
                    lp_cur[t] = pi_k.prob(s, a).ln();
                    lp_beh[t] = behavior.prob(s, a).ln();
                    s = s_next;
                    a = sample(&mut rng, behavior.row(s));
                }
                let seg = Segment {
                    rewards: &rewards,
                    values: &values,
                    next_values: &next_values,
                    terminal: &terminal,
                    done: &done,
                };
                let adv = vtrace(&seg, &lp_cur, &lp_beh, &cfg)?.advantages[0];
                sum += adv;
                sum_sq += adv * adv;
            }
            let n = samples as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
            out.push(McEstimate {
                state: s0,
                action: a0,
                exact: oracle.a[s0][a0],
                mean,
                stderr: (var / n).sqrt(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        for name in Suite::NAMES {
            assert_eq!(name.parse::<Suite>().unwrap().as_str(), name);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn weights_suite_passes() {
        let r = verify(Suite::Weights, DEFAULT_SEED).unwrap();
        assert!(r.passed, "{}", r.to_json_pretty());
        assert_eq!(r.check("essopt_b2").unwrap().failures, 0);
    }

    #[test]
    fn small_bounds_and_identities_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for c in bounds_suite(&mut rng, 10).unwrap() {
            assert!(c.passed, "{c:?}");
        }
        for c in identities_suite(&mut rng, 10).unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn failing_case_is_counted() {
        let mut c = CheckReport::new("x");
        c.close(1.0, 1.0, 0.0);
        c.close(1.0, 2.0, 0.5);
        c.record(f64::NAN, true);
        assert_eq!((c.cases, c.failures, c.passed), (3, 2, false));
        assert_eq!(c.worst_slack, f64::NEG_INFINITY);
    }
}
