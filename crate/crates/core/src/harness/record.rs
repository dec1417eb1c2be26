use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{parse_with_overrides, TrainerConfig};
use crate::envs::EnvName;
use crate::error::{Error, Result};
use crate::trainer::{IterationMetrics, Trainer};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";
pub const POLICY_FILE: &str = "policy.ckpt";
pub const VALUE_FILE: &str = "value.ckpt";

/// Number of trailing evaluations averaged into the final performance.
pub const FINAL_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub algorithm: String,
    pub env: EnvName,
    pub seed: u64,
    pub config_hash: String,
    /// Top-level configuration keys that differ from the defaults.
    pub overrides: Vec<String>,
    pub batch_size: usize,
    pub b: usize,
    pub m: usize,
    pub nu: Vec<f64>,
    pub epsilon: f64,
    pub iterations: u64,
    pub steps: u64,
    /// Evaluation return of the untrained policy.
    pub initial_return: f64,
    /// Mean evaluation return over all iterations.
    pub average_return: Option<f64>,
    /// Mean of the last evaluations.
    pub final_return: Option<f64>,
    pub threshold: Option<f64>,
    /// First step count whose trailing mean return reaches `threshold`.
    pub steps_to_threshold: Option<u64>,
    /// Set when training stopped early.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub metrics: Vec<IterationMetrics>,
}

/// Mean of the last [`FINAL_WINDOW`] entries ending at each index.
pub fn trailing_means(xs: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(FINAL_WINDOW);
            xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// First `steps` at which the trailing mean return reaches `target`.
pub fn steps_to_reach(metrics: &[IterationMetrics], target: f64) -> Option<u64> {
    let returns: Vec<f64> = metrics.iter().map(|m| m.eval_return).collect();
    trailing_means(&returns)
        .iter()
        .position(|&r| r >= target)
        .map(|i| metrics[i].steps)
}

impl RunRecord {
    /// Recomputes the summary statistics from `metrics`.
    pub fn summarize(&mut self) {
        let returns: Vec<f64> = self.metrics.iter().map(|m| m.eval_return).collect();
        let s = &mut self.summary;
        s.iterations = self.metrics.len() as u64;
        s.steps = self.metrics.last().map_or(0, |m| m.steps);
        s.average_return =
            (!returns.is_empty()).then(|| returns.iter().sum::<f64>() / returns.len() as f64);
        s.final_return = trailing_means(&returns).last().copied();
        s.steps_to_threshold = s.threshold.and_then(|t| steps_to_reach(&self.metrics, t));
    }

    pub fn metrics_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.metrics {
            out.push_str(&serde_json::to_string(m).expect("metrics serialize"));
            out.push('\n');
        }
        out
    }

    pub fn parse_metrics(text: &str) -> Result<Vec<IterationMetrics>> {
        Self::read_metrics(text.as_bytes())
    }

    pub fn read_metrics<R: BufRead>(r: R) -> Result<Vec<IterationMetrics>> {
        let mut out = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let m: IterationMetrics = serde_json::from_str(&line)
                .map_err(|e| Error::Decode(format!("metrics line {}: {e}", i + 1)))?;
            out.push(m);
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(METRICS_FILE), self.metrics_jsonl())?;
        fs::write(
            dir.join(SUMMARY_FILE),
            serde_json::to_string_pretty(&self.summary)? + "\n",
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let summary: RunSummary =
            serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE))?)?;
        let metrics = Self::read_metrics(BufReader::new(fs::File::open(dir.join(METRICS_FILE))?))?;
        Ok(Self { summary, metrics })
    }

    /// Loads `dir` itself if it holds a run, otherwise every immediate
    /// subdirectory that does, in name order.
    pub fn load_all(dir: &Path) -> Result<Vec<Self>> {
        if dir.join(SUMMARY_FILE).is_file() {
            return Ok(vec![Self::load(dir)?]);
        }
        let mut subdirs: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(SUMMARY_FILE).is_file())
            .collect();
        subdirs.sort();
        subdirs.iter().map(|p| Self::load(p)).collect()
    }
}

/// Options for [`run_experiment`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory; metrics stream to it while training.
    pub out_dir: Option<std::path::PathBuf>,
    pub overrides: Vec<String>,
    pub threshold: Option<f64>,
}

/// Parses a configuration document, recording overridden keys.
pub fn load_config(text: &str) -> Result<(TrainerConfig, Vec<String>)> {
    parse_with_overrides(text)
}

/// Trains to completion. A divergence ends the run early and is recorded in
/// the summary rather than returned as an error.
pub fn run_experiment(cfg: &TrainerConfig, opts: &RunOptions) -> Result<RunRecord> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let resolved = trainer.resolved().clone();
    let initial_return = trainer.evaluate()?;
    let mut writer = match &opts.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(CONFIG_FILE), cfg.to_json_pretty() + "\n")?;
            Some(BufWriter::new(fs::File::create(dir.join(METRICS_FILE))?))
        }
        None => None,
    };
    let mut record = RunRecord {
        summary: RunSummary {
            algorithm: cfg.algorithm.name().to_string(),
            env: cfg.env,
            seed: cfg.seed,
            config_hash: cfg.hash(),
            overrides: opts.overrides.clone(),
            batch_size: resolved.batch_size,
            b: resolved.b,
            m: resolved.m,
            nu: resolved.nu.as_slice().to_vec(),
            epsilon: resolved.epsilon,
            iterations: 0,
            steps: 0,
            initial_return,
            average_return: None,
            final_return: None,
            threshold: opts.threshold,
            steps_to_threshold: None,
            aborted: None,
        },
        metrics: Vec::new(),
    };
    for _ in 0..resolved.iterations {
        match trainer.step() {
            Ok((m, _)) => {
                if let Some(w) = writer.as_mut() {
                    serde_json::to_writer(&mut *w, &m)?;
                    w.write_all(b"\n")?;
                    w.flush()?;
                }
                record.metrics.push(m);
            }
            Err(e @ Error::Diverged { .. }) => {
                record.summary.aborted = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    record.summarize();
    if let Some(dir) = &opts.out_dir {
        drop(writer);
        record.save(dir)?;
        fs::write(
            dir.join(POLICY_FILE),
            trainer.policy().to_checkpoint().to_bytes(),
        )?;
        fs::write(
            dir.join(VALUE_FILE),
            trainer.value().to_checkpoint().to_bytes(),
        )?;
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainerConfig {
        TrainerConfig {
            n: 64,
            big_n: 128,
            total_steps: 256,
            minibatches: 4,
            epochs: 1,
            hidden: vec![8],
            eval_episodes: 1,
            ..Default::default()
        }
    }

    #[test]
    fn zero_steps_gives_empty_record() {
        let cfg = TrainerConfig {
            total_steps: 0,
            ..tiny()
        };
        let r = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert!(r.metrics.is_empty());
        assert_eq!(r.summary.final_return, None);
        assert_eq!(r.summary.m, 4);
    }

    #[test]
    fn records_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            threshold: Some(-1e9),
            ..Default::default()
        };
        let r = run_experiment(&tiny(), &opts).unwrap();
        assert_eq!(r.metrics.len(), 4);
        assert_eq!(r.summary.steps_to_threshold, Some(64));
        let back = RunRecord::load(dir.path()).unwrap();
        assert_eq!(back, r);
        assert_eq!(RunRecord::load_all(dir.path()).unwrap(), vec![r]);
        assert!(dir.path().join(POLICY_FILE).is_file());
    }

    #[test]
    fn trailing_mean_window() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let t = trailing_means(&xs);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[1], 0.5);
        assert_eq!(t[11], (2..12).sum::<i32>() as f64 / 10.0);
    }
}
