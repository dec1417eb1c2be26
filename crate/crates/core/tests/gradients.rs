//! Analytic gradients against central finite differences.

use geppo::approximator::{GaussianPolicy, MlpLayout, ValueNet};
use geppo::buffer::WeightedSample;
use geppo::objective::{geppo_loss, ClipConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 25;
const H: f64 = 1e-6;
const REL_TOL: f64 = 1e-4;

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_policy(rng: &mut ChaCha8Rng, obs_dim: usize, act_dim: usize) -> GaussianPolicy {
    let layout = MlpLayout::with_hidden(obs_dim, &[6, 5], act_dim).unwrap();
    let mut params = random_vec(rng, layout.num_params(), 0.8);
    params.extend(random_vec(rng, act_dim, 0.5));
    GaussianPolicy::from_parts(layout, params).unwrap()
}

fn central_difference(params: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + H;
            let up = f(&p);
            p[i] = orig - H;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm_a: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let norm_b: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / norm_a.max(norm_b).max(1e-12)
}

#[test]
fn policy_logprob_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..DRAWS {
        let policy = random_policy(&mut rng, 3, 2);
        let obs = random_vec(&mut rng, 3, 2.0);
        let action = random_vec(&mut rng, 2, 1.5);
        let (_, grad) = policy.logprob_and_grad(&obs, &action);
        let numeric = central_difference(policy.params(), |p| {
            let mut q = policy.clone();
            q.params_mut().copy_from_slice(p);
            q.logprob(&obs, &action)
        });
        let err = relative_error(&grad, &numeric);
        assert!(err < REL_TOL, "relative error {err}");
    }
}

#[test]
fn value_output_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..DRAWS {
        let layout = MlpLayout::with_hidden(4, &[7, 3], 1).unwrap();
        let net = ValueNet::from_parts(
            layout.clone(),
            random_vec(&mut rng, layout.num_params(), 0.8),
        )
        .unwrap();
        let obs = random_vec(&mut rng, 4, 2.0);
        let (_, grad) = net.value_and_grad(&obs);
        let numeric = central_difference(net.params(), |p| {
            ValueNet::from_parts(layout.clone(), p.to_vec())
                .unwrap()
                .value(&obs)
        });
        let err = relative_error(&grad, &numeric);
        assert!(err < REL_TOL, "relative error {err}");
    }
}

#[test]
fn geppo_loss_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let clip = ClipConfig::new(0.1).unwrap();
    for _ in 0..DRAWS {
        let current = random_policy(&mut rng, 3, 2);
        let mut candidate = current.clone();
        for p in candidate.params_mut() {
            *p += rng.random_range(-0.05..0.05);
        }
        let behaviors: Vec<GaussianPolicy> = (0..3)
            .map(|_| {
                let mut b = current.clone();
                for p in b.params_mut() {
                    *p += rng.random_range(-0.1..0.1);
                }
                b
            })
            .collect();
        let samples: Vec<WeightedSample> = (0..12)
            .map(|j| {
                let age = j % 3;
                let obs = random_vec(&mut rng, 3, 2.0);
                let action = random_vec(&mut rng, 2, 1.0);
                WeightedSample {
                    next_obs: obs.clone(),
                    behavior_logprob: behaviors[age].logprob(&obs, &action),
                    current_logprob: current.logprob(&obs, &action),
                    obs,
                    action,
                    reward: 0.0,
                    terminal: false,
                    done: false,
                    age,
                    weight: rng.random_range(0.2..2.0),
                }
            })
            .collect();
        let refs: Vec<&WeightedSample> = samples.iter().collect();
        let advs = random_vec(&mut rng, refs.len(), 2.0);

        let mut grad = vec![0.0; candidate.num_params()];
        geppo_loss(&candidate, &refs, &advs, clip, Some(&mut grad)).unwrap();
        let numeric = central_difference(candidate.params(), |p| {
            let mut q = candidate.clone();
            q.params_mut().copy_from_slice(p);
            geppo_loss(&q, &refs, &advs, clip, None).unwrap().loss
        });
        let err = relative_error(&grad, &numeric);
        assert!(err < REL_TOL, "relative error {err}");
    }
}
