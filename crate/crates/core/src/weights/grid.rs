//! Exhaustive search over a discretized simplex. Weights are handled as
//! integer counts of `step`, so the equality constraint of the ESS program
//! is tested exactly.

use serde::{Deserialize, Serialize};

use super::WeightProgram;
use crate::error::{invalid, Error, Result};

const MAX_M_BAR: usize = 5;
const MAX_POINTS: f64 = 2e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub nu: Vec<f64>,
    pub objective: f64,
    pub evaluated: u64,
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Best feasible grid point for `program` (essopt or tvopt).
pub fn grid_oracle(program: WeightProgram, b: f64, m_bar: usize, step: f64) -> Result<GridResult> {
    if !(step > 0.0 && step <= 1e-2) {
        return Err(invalid(format!(
            "grid step must lie in (0, 1e-2], got {step}"
        )));
    }
    if m_bar == 0 || m_bar > MAX_M_BAR {
        return Err(Error::BudgetExceeded(format!(
            "M_bar = {m_bar} outside 1..={MAX_M_BAR}"
        )));
    }
    if !(b.is_finite() && b >= 1.0) {
        return Err(invalid(format!("B must be >= 1, got {b}")));
    }
    let g = (1.0 / step).round() as u64;
    if ((g as f64) * step - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("grid step {step} must divide 1")));
    }
    let free = match program {
        WeightProgram::Essopt => m_bar.saturating_sub(2),
        WeightProgram::Tvopt => m_bar - 1,
        WeightProgram::Uniform => return Err(invalid("uniform weights have nothing to search")),
    } as u64;
    let points = binomial(g + free, free);
    if points > MAX_POINTS {
        return Err(Error::BudgetExceeded(format!(
            "{points:.3e} grid points exceed {MAX_POINTS:.0e}"
        )));
    }

    let mut search = Search {
        program,
        b,
        g,
        m_bar,
        counts: vec![0; m_bar],
        best: None,
        evaluated: 0,
    };
    search.descend(0, g, 0);
    let (objective, counts) = search.best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no feasible grid point for B = {b}, M_bar = {m_bar}"
        ))
    })?;
    Ok(GridResult {
        nu: counts.iter().map(|&c| c as f64 / g as f64).collect(),
        objective,
        evaluated: search.evaluated,
    })
}

struct Search {
    program: WeightProgram,
    b: f64,
    g: u64,
    m_bar: usize,
    counts: Vec<u64>,
    best: Option<(f64, Vec<u64>)>,
    evaluated: u64,
}

impl Search {
    /// Assigns `counts[idx..]` given `remaining` mass and `age_mass = Σ c_i (i+1)` so far.
    fn descend(&mut self, idx: usize, remaining: u64, age_mass: u64) {
        let tail = match self.program {
            WeightProgram::Essopt => 2,
            _ => 1,
        };
        if idx + tail >= self.m_bar {
            self.complete(idx, remaining, age_mass);
            return;
        }
        for c in 0..=remaining {
            self.counts[idx] = c;
            self.descend(idx + 1, remaining - c, age_mass + c * (idx as u64 + 1));
        }
        self.counts[idx] = 0;
    }

    fn complete(&mut self, idx: usize, remaining: u64, age_mass: u64) {
        let g = self.g as f64;
        match self.program {
            WeightProgram::Essopt => {
                let target = self.b * g;
                if (target - target.round()).abs() > 1e-9 {
                    return;
                }
                let target = target.round() as i64 - age_mass as i64;
                let r = remaining as i64;
                if idx + 1 == self.m_bar {
                    // single slot left
                    if target != r * (idx as i64 + 1) {
                        return;
                    }
                    self.counts[idx] = remaining;
                } else {
                    // c_p + c_q = r, (p+1)c_p + (p+2)c_q = target
                    let last = target - (idx as i64 + 1) * r;
                    if last < 0 || last > r {
                        return;
                    }
                    self.counts[idx] = (r - last) as u64;
                    self.counts[idx + 1] = last as u64;
                }
            }
            _ => self.counts[idx] = remaining,
        }
        self.evaluated += 1;
        let sq: u64 = self.counts.iter().map(|c| c * c).sum();
        let objective = match self.program {
            WeightProgram::Essopt => sq as f64 / (g * g),
            _ => {
                if sq as f64 * self.b > g * g * (1.0 + 1e-12) {
                    return;
                }
                let lin: u64 = self
                    .counts
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * (i as u64 + 1))
                    .sum();
                lin as f64 / g
            }
        };
        if self.best.as_ref().is_none_or(|(best, _)| objective < *best) {
            self.best = Some((objective, self.counts.clone()));
        }
        for c in &mut self.counts[idx..] {
            *c = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{solve_essopt, solve_tvopt};

    #[test]
    fn matches_tvopt_at_fine_step() {
        let grid = grid_oracle(WeightProgram::Tvopt, 2.0, 3, 1e-3).unwrap();
        let kkt = solve_tvopt(2.0, 3).unwrap();
        assert!(grid.objective >= kkt.expected_age_plus_one() - 1e-12);
        assert!((grid.objective - kkt.expected_age_plus_one()).abs() < 1e-3);
    }

    #[test]
    fn matches_essopt() {
        let grid = grid_oracle(WeightProgram::Essopt, 2.0, 4, 1e-3).unwrap();
        let kkt = solve_essopt(2.0, 4).unwrap();
        assert!((grid.objective - 1.0 / kkt.ess_per_n()).abs() < 1e-3);
        let grid5 = grid_oracle(WeightProgram::Essopt, 2.0, 5, 1e-2).unwrap();
        assert!((grid5.objective - 0.3).abs() < 1e-12);
        assert_eq!(grid5.nu, vec![0.4, 0.3, 0.2, 0.1, 0.0]);
    }

    #[test]
    fn degenerate_b1() {
        let e = grid_oracle(WeightProgram::Essopt, 1.0, 3, 1e-2).unwrap();
        assert_eq!(e.nu, vec![1.0, 0.0, 0.0]);
        let t = grid_oracle(WeightProgram::Tvopt, 1.0, 3, 1e-2).unwrap();
        assert_eq!(t.nu, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn budget_and_precondition_errors() {
        assert!(matches!(
            grid_oracle(WeightProgram::Tvopt, 2.0, 6, 1e-2),
            Err(Error::BudgetExceeded(_))
        ));
        assert!(matches!(
            grid_oracle(WeightProgram::Tvopt, 2.0, 5, 1e-4),
            Err(Error::BudgetExceeded(_))
        ));
        assert!(grid_oracle(WeightProgram::Essopt, 2.0, 3, 0.05).is_err());
    }
}
