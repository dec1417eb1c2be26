use std::fmt::Write as _;

use serde::Serialize;

use super::record::{trailing_means, RunRecord};
use crate::error::{invalid, Result};

/// Mean and standard error over seeds. The error is `None` for one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: Option<f64>,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = (xs.len() > 1).then(|| {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Some(Self { mean, se })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub algorithm: String,
    pub seeds: usize,
    pub average_return: MeanSe,
    pub final_return: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub env: String,
    pub baseline: GroupStats,
    pub candidate: GroupStats,
    /// `(candidate - baseline) / |baseline| * 100` for the average return.
    pub average_improvement_pct: f64,
    pub final_improvement_pct: f64,
    /// Steps the candidate needs to reach the baseline's final return,
    /// divided by the steps the baseline needs. `None` if the candidate never
    /// gets there.
    pub steps_ratio: Option<f64>,
}

/// Mean over seeds of the trailing-mean return curve, truncated to the
/// shortest run. Returns `(steps, value)` pairs.
fn mean_curve(runs: &[RunRecord]) -> Vec<(u64, f64)> {
    let len = runs.iter().map(|r| r.metrics.len()).min().unwrap_or(0);
    let curves: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| trailing_means(&r.metrics.iter().map(|m| m.eval_return).collect::<Vec<_>>()))
        .collect();
    (0..len)
        .map(|i| {
            let v = curves.iter().map(|c| c[i]).sum::<f64>() / runs.len() as f64;
            (runs[0].metrics[i].steps, v)
        })
        .collect()
}

fn first_reaching(curve: &[(u64, f64)], target: f64) -> Option<u64> {
    curve.iter().find(|(_, v)| *v >= target).map(|(s, _)| *s)
}

fn stats(runs: &[RunRecord]) -> Result<GroupStats> {
    let algorithm = runs[0].summary.algorithm.clone();
    let collect = |f: fn(&RunRecord) -> Option<f64>| -> Result<MeanSe> {
        let xs = runs
            .iter()
            .map(|r| {
                f(r).ok_or_else(|| {
                    invalid(format!(
                        "run with seed {} has no iterations",
                        r.summary.seed
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MeanSe::of(&xs).expect("nonempty"))
    };
    Ok(GroupStats {
        algorithm,
        seeds: runs.len(),
        average_return: collect(|r| r.summary.average_return)?,
        final_return: collect(|r| r.summary.final_return)?,
    })
}

fn pct(candidate: f64, baseline: f64) -> f64 {
    (candidate - baseline) / baseline.abs() * 100.0
}

/// Compares two groups of runs on the same environment.
pub fn compare(baseline: &[RunRecord], candidate: &[RunRecord]) -> Result<Comparison> {
    if baseline.is_empty() || candidate.is_empty() {
        return Err(invalid("each side needs at least one run"));
    }
    let env = baseline[0].summary.env;
    if baseline
        .iter()
        .chain(candidate)
        .any(|r| r.summary.env != env)
    {
        return Err(invalid("runs span more than one environment"));
    }
    let a = stats(baseline)?;
    let b = stats(candidate)?;
    let target = a.final_return.mean;
    let steps_a = first_reaching(&mean_curve(baseline), target);
    let steps_b = first_reaching(&mean_curve(candidate), target);
    let steps_ratio = match (steps_a, steps_b) {
        (Some(sa), Some(sb)) if sa > 0 => Some(sb as f64 / sa as f64),
        _ => None,
    };
    Ok(Comparison {
        env: env.as_str().to_string(),
        average_improvement_pct: pct(b.average_return.mean, a.average_return.mean),
        final_improvement_pct: pct(b.final_return.mean, a.final_return.mean),
        baseline: a,
        candidate: b,
        steps_ratio,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "env,algorithm,seeds,average_mean,average_se,final_mean,final_se,average_improvement_pct,final_improvement_pct,steps_ratio\n",
        );
        for (g, is_candidate) in [(&self.baseline, false), (&self.candidate, true)] {
            let tail = if is_candidate {
                format!(
                    "{},{},{}",
                    self.average_improvement_pct,
                    self.final_improvement_pct,
                    fmt_opt(self.steps_ratio)
                )
            } else {
                ",,".to_string()
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.env,
                g.algorithm,
                g.seeds,
                g.average_return.mean,
                fmt_opt(g.average_return.se),
                g.final_return.mean,
                fmt_opt(g.final_return.se),
                tail
            )
            .expect("write to string");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvName;
    use crate::harness::record::RunSummary;
    use crate::trainer::IterationMetrics;

    fn fixture(seed: u64, returns: &[f64], step_scale: f64) -> RunRecord {
        let metrics: Vec<IterationMetrics> = returns
            .iter()
            .enumerate()
            .map(|(i, &r)| IterationMetrics {
                iter: i as u64 + 1,
                steps: ((i as f64 + 1.0) * 1000.0 * step_scale) as u64,
                eval_return: r,
                tv_hat: 0.01,
                eta: 3e-4,
                clip_frac: 0.1,
                loss: 0.0,
            })
            .collect();
        let mut rec = RunRecord {
            summary: RunSummary {
                algorithm: "geppo".into(),
                env: EnvName::PointMass,
                seed,
                config_hash: String::new(),
                overrides: vec![],
                batch_size: 1000,
                b: 2,
                m: 4,
                nu: vec![0.4, 0.3, 0.2, 0.1],
                epsilon: 0.1,
                iterations: 0,
                steps: 0,
                initial_return: returns[0],
                average_return: None,
                final_return: None,
                threshold: None,
                steps_to_threshold: None,
                aborted: None,
            },
            metrics,
        };
        rec.summarize();
        rec
    }

    fn ramp() -> Vec<f64> {
        (0..40).map(|i| -100.0 + 2.0 * i as f64).collect()
    }

    #[test]
    fn identical_inputs() {
        let a = vec![fixture(0, &ramp(), 1.0), fixture(1, &ramp(), 1.0)];
        let c = compare(&a, &a).unwrap();
        assert_eq!(c.average_improvement_pct, 0.0);
        assert_eq!(c.final_improvement_pct, 0.0);
        assert_eq!(c.steps_ratio, Some(1.0));
        assert_eq!(c.baseline.final_return.se, Some(0.0));
    }

    #[test]
    fn faster_candidate_ratio() {
        let a = vec![fixture(0, &ramp(), 1.0)];
        let b = vec![fixture(0, &ramp(), 0.75)];
        let c = compare(&a, &b).unwrap();
        assert_eq!(c.steps_ratio, Some(0.75));
        assert!(c.to_csv().lines().nth(1).unwrap().contains(",,"));
    }

    #[test]
    fn improvement_sign_uses_abs() {
        let a = vec![fixture(0, &[-100.0; 12], 1.0)];
        let b = vec![fixture(0, &[-50.0; 12], 1.0)];
        let c = compare(&a, &b).unwrap();
        assert_eq!(c.final_improvement_pct, 50.0);
    }

    #[test]
    fn mismatched_envs_rejected() {
        let a = vec![fixture(0, &ramp(), 1.0)];
        let mut b = a.clone();
        b[0].summary.env = EnvName::Pendulum;
        assert!(compare(&a, &b).is_err());
    }
}
