//! Random instance generation for the certification suites.
//!
//! Rows are normalized positive uniforms, so every generated policy has full
//! support and the support-containment preconditions always hold.

use rand::Rng;

use super::{TabularMdp, TabularPolicy};

fn positive_simplex<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| 0.01 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, ns: usize, na: usize, gamma: f64) -> TabularMdp {
    let transition = (0..ns)
        .map(|_| (0..na).map(|_| positive_simplex(rng, ns)).collect())
        .collect();
    let reward = (0..ns)
        .map(|_| (0..na).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let rho0 = positive_simplex(rng, ns);
    TabularMdp::new(transition, reward, rho0, gamma).expect("generated MDP is valid")
}

pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, ns: usize, na: usize) -> TabularPolicy {
    TabularPolicy::new((0..ns).map(|_| positive_simplex(rng, na)).collect())
        .expect("generated policy is valid")
}

/// A distribution over `m` entries.
pub fn random_weights<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<f64> {
    positive_simplex(rng, m)
}

/// One fuzzed certification instance: an MDP, `M` prior policies (index 0 is
/// the current policy), weights over them, and a candidate policy.
#[derive(Debug, Clone)]
pub struct Instance {
    pub mdp: TabularMdp,
    pub priors: Vec<TabularPolicy>,
    pub nu: Vec<f64>,
    pub candidate: TabularPolicy,
    /// An extra independent policy used as a reference policy.
    pub reference: TabularPolicy,
}

/// Draws `|S| ∈ [1, max_states]`, `|A| ∈ [1, max_actions]`, `M ∈ [1, max_m]`,
/// `γ ∈ [0.5, 0.9]`.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    max_states: usize,
    max_actions: usize,
    max_m: usize,
) -> Instance {
    let ns = rng.random_range(1..=max_states);
    let na = rng.random_range(1..=max_actions);
    let m = rng.random_range(1..=max_m);
    let gamma = rng.random_range(0.5..=0.9);
    let mdp = random_mdp(rng, ns, na, gamma);
    let priors = (0..m).map(|_| random_policy(rng, ns, na)).collect();
    let nu = random_weights(rng, m);
    let candidate = random_policy(rng, ns, na);
    let reference = random_policy(rng, ns, na);
    Instance {
        mdp,
        priors,
        nu,
        candidate,
        reference,
    }
}
