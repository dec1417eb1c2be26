use super::{PolicyWeights, WeightProgram};
use crate::error::{invalid, Error, Result};

/// KKT residual tolerance for accepting an active set.
const KKT_TOL: f64 = 1e-12;

fn check_b(b: f64) -> Result<()> {
    if !(b.is_finite() && b >= 1.0) {
        return Err(invalid(format!("B must be a finite number >= 1, got {b}")));
    }
    Ok(())
}

fn padded(head: &[f64], m_bar: usize) -> Vec<f64> {
    let mut nu = vec![0.0; m_bar];
    nu[..head.len()].copy_from_slice(head);
    nu
}

/// Minimizes `Σ ν_i²` subject to `Σ ν_i (i+1) = B` over the simplex of
/// dimension `m_bar`.
///
/// The optimum is linear in the index on a prefix support,
/// `ν_i = max(0, a - b·i)`; each candidate support size is solved in closed
/// form and checked against the KKT conditions.
pub fn solve_essopt(b: f64, m_bar: usize) -> Result<PolicyWeights> {
    check_b(b)?;
    if (m_bar as f64) < 2.0 * b - 1.0 {
        return Err(Error::Infeasible(format!(
            "essopt needs M_bar >= 2B - 1, got M_bar = {m_bar}, B = {b}"
        )));
    }
    if (b - 1.0).abs() <= KKT_TOL {
        return PolicyWeights::snapped(padded(&[1.0], m_bar));
    }
    for k in (2..=m_bar).rev() {
        let kf = k as f64;
        let s1 = kf * (kf - 1.0) / 2.0;
        let s1p = kf * (kf + 1.0) / 2.0;
        let s2 = (kf - 1.0) * kf * (kf + 1.0) / 3.0;
        // [k, -s1; s1p, -s2] [a; slope] = [1; B]
        let det = s1 * s1p - kf * s2;
        let a = (s1 * b - s2) / det;
        let slope = (kf * b - s1p) / det;
        if let Some(nu) = accept_linear(a, slope, k, m_bar) {
            return PolicyWeights::snapped(nu);
        }
    }
    projected_gradient(WeightProgram::Essopt, b, m_bar)
}

/// Minimizes `Σ ν_i (i+1)` subject to `Σ ν_i² <= 1/B` over the simplex of
/// dimension `m_bar`.
///
/// With the norm constraint binding the optimum is again linear on a prefix
/// of size `k`: `ν_i = 1/k - slope·(i - (k-1)/2)` with the slope fixed by
/// `Σ ν_i² = 1/B`.
pub fn solve_tvopt(b: f64, m_bar: usize) -> Result<PolicyWeights> {
    check_b(b)?;
    if m_bar == 0 || (m_bar as f64) < b - KKT_TOL {
        return Err(Error::Infeasible(format!(
            "tvopt needs M_bar >= B, got M_bar = {m_bar}, B = {b}"
        )));
    }
    if (b - 1.0).abs() <= KKT_TOL {
        // The norm constraint cannot bind; all mass on the newest policy.
        return PolicyWeights::snapped(padded(&[1.0], m_bar));
    }
    for k in (2..=m_bar).rev() {
        let kf = k as f64;
        if kf < b - KKT_TOL {
            break;
        }
        let spread = ((1.0 / b - 1.0 / kf).max(0.0) * 12.0 / (kf * (kf * kf - 1.0))).sqrt();
        if spread == 0.0 && k != m_bar {
            // A flat profile only satisfies stationarity when it is the sole feasible point.
            continue;
        }
        let a = 1.0 / kf + spread * (kf - 1.0) / 2.0;
        if let Some(nu) = accept_linear(a, spread, k, m_bar) {
            return PolicyWeights::snapped(nu);
        }
    }
    projected_gradient(WeightProgram::Tvopt, b, m_bar)
}

/// Uniform weights over `2B - 1` policies, the feasible point used by the
/// sample-size trade-off for uniform weights.
pub fn solve_uniform(b: f64, m_bar: usize) -> Result<PolicyWeights> {
    check_b(b)?;
    let m = (2.0 * b - 1.0).round();
    if (m - (2.0 * b - 1.0)).abs() > KKT_TOL {
        return Err(invalid(format!(
            "uniform weights need integer 2B - 1, got B = {b}"
        )));
    }
    let m = m as usize;
    if m_bar < m {
        return Err(Error::Infeasible(format!(
            "uniform weights need M_bar >= {m}, got {m_bar}"
        )));
    }
    PolicyWeights::snapped(padded(&vec![1.0 / m as f64; m], m_bar))
}

/// Checks `ν_i = a - slope·i` on the prefix `[0, k)` for nonnegativity, and
/// that the extension past `k` would be nonpositive (inactive multipliers).
fn accept_linear(a: f64, slope: f64, k: usize, m_bar: usize) -> Option<Vec<f64>> {
    if !a.is_finite() || !slope.is_finite() {
        return None;
    }
    let head: Vec<f64> = (0..k).map(|i| a - slope * i as f64).collect();
    if head.iter().any(|&x| x < -KKT_TOL) {
        return None;
    }
    if (k..m_bar).any(|i| a - slope * i as f64 > KKT_TOL) {
        return None;
    }
    Some(padded(
        &head.iter().map(|x| x.max(0.0)).collect::<Vec<_>>(),
        m_bar,
    ))
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Augmented-Lagrangian projected gradient on the simplex. Slower and less
/// exact than the active-set solve; used when no support size passes the
/// KKT check.
pub fn projected_gradient(program: WeightProgram, b: f64, m_bar: usize) -> Result<PolicyWeights> {
    check_b(b)?;
    if m_bar == 0 {
        return Err(invalid("M_bar must be at least 1"));
    }
    let ages: Vec<f64> = (0..m_bar).map(|i| (i + 1) as f64).collect();
    let rho = 50.0;
    let mut lambda = 0.0;
    let mut nu = vec![1.0 / m_bar as f64; m_bar];

    // Value and gradient of the augmented Lagrangian at fixed multiplier.
    let eval = |nu: &[f64], lambda: f64| -> (f64, Vec<f64>) {
        let lin: f64 = nu.iter().zip(&ages).map(|(x, c)| x * c).sum();
        let sq: f64 = nu.iter().map(|x| x * x).sum();
        match program {
            WeightProgram::Essopt | WeightProgram::Uniform => {
                let h = lin - b;
                let value = sq + lambda * h + 0.5 * rho * h * h;
                let grad = nu
                    .iter()
                    .zip(&ages)
                    .map(|(x, c)| 2.0 * x + (lambda + rho * h) * c)
                    .collect();
                (value, grad)
            }
            WeightProgram::Tvopt => {
                let g = sq - 1.0 / b;
                let active = (lambda + rho * g).max(0.0);
                let value = lin + (active * active - lambda * lambda) / (2.0 * rho);
                let grad = nu
                    .iter()
                    .zip(&ages)
                    .map(|(x, c)| c + active * 2.0 * x)
                    .collect();
                (value, grad)
            }
        }
    };

    for _outer in 0..200 {
        let mut step = 1.0;
        for _inner in 0..2000 {
            let (value, grad) = eval(&nu, lambda);
            let mut moved = false;
            while step > 1e-14 {
                let trial: Vec<f64> = project_simplex(
                    &nu.iter()
                        .zip(&grad)
                        .map(|(x, g)| x - step * g)
                        .collect::<Vec<_>>(),
                );
                let decrease: f64 = grad
                    .iter()
                    .zip(trial.iter().zip(&nu))
                    .map(|(g, (t, x))| g * (t - x))
                    .sum();
                let dist: f64 = trial.iter().zip(&nu).map(|(t, x)| (t - x) * (t - x)).sum();
                let (tv, _) = eval(&trial, lambda);
                if tv <= value + decrease + dist / (2.0 * step) {
                    let delta = dist.sqrt();
                    nu = trial;
                    moved = delta > 1e-15;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let lin: f64 = nu.iter().zip(&ages).map(|(x, c)| x * c).sum();
        let sq: f64 = nu.iter().map(|x| x * x).sum();
        let violation = match program {
            WeightProgram::Tvopt => {
                lambda = (lambda + rho * (sq - 1.0 / b)).max(0.0);
                (sq - 1.0 / b).max(0.0)
            }
            _ => {
                lambda += rho * (lin - b);
                (lin - b).abs()
            }
        };
        if violation < 1e-10 {
            break;
        }
    }
    PolicyWeights::snapped(nu)
}
