use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::compare::MeanSe;
use super::record::{RunRecord, SUMMARY_FILE};
use crate::error::{invalid, Result};

pub const PLOT_DIR: &str = "plots";

/// Finds run directories at `dir` or up to two levels below it.
pub fn find_runs(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) -> Result<()> {
        if dir.join(SUMMARY_FILE).is_file() {
            out.push(dir.to_path_buf());
            return Ok(());
        }
        if depth == 0 {
            return Ok(());
        }
        let mut children: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n != PLOT_DIR))
            .collect();
        children.sort();
        for c in children {
            walk(&c, depth - 1, out)?;
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, 2, &mut out)?;
    Ok(out)
}

fn se_cell(s: &MeanSe) -> String {
    s.se.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-iteration mean and standard error across seeds, truncated to the
/// shortest run.
fn curve(
    runs: &[RunRecord],
    field: fn(&crate::trainer::IterationMetrics) -> f64,
) -> Vec<(u64, MeanSe)> {
    let len = runs.iter().map(|r| r.metrics.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let xs: Vec<f64> = runs.iter().map(|r| field(&r.metrics[i])).collect();
            (runs[0].metrics[i].steps, MeanSe::of(&xs).expect("nonempty"))
        })
        .collect()
}

/// Writes `<env>_<algorithm>_return.csv` and `<env>_<algorithm>_tv.csv` under
/// `dir/plots` for every group of runs found in `dir`. Returns the files
/// written.
pub fn emit_plot_data(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut groups: BTreeMap<(String, String), Vec<RunRecord>> = BTreeMap::new();
    for path in find_runs(dir)? {
        let r = RunRecord::load(&path)?;
        groups
            .entry((
                r.summary.env.as_str().to_string(),
                r.summary.algorithm.clone(),
            ))
            .or_default()
            .push(r);
    }
    if groups.is_empty() {
        return Err(invalid(format!("no runs found under {}", dir.display())));
    }
    let out_dir = dir.join(PLOT_DIR);
    fs::create_dir_all(&out_dir)?;
    let mut written = Vec::new();
    for ((env, alg), runs) in &groups {
        let mut ret = String::from("steps,mean,stderr\n");
        for (steps, s) in curve(runs, |m| m.eval_return) {
            writeln!(ret, "{steps},{},{}", s.mean, se_cell(&s)).expect("write to string");
        }
        let target = runs[0].summary.epsilon / 2.0;
        let mut tv = String::from("steps,mean,stderr,target\n");
        for (steps, s) in curve(runs, |m| m.tv_hat) {
            writeln!(tv, "{steps},{},{},{target}", s.mean, se_cell(&s)).expect("write to string");
        }
        for (suffix, body) in [("return", ret), ("tv", tv)] {
            let path = out_dir.join(format!("{env}_{alg}_{suffix}.csv"));
            fs::write(&path, body)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainerConfig;
    use crate::harness::record::{run_experiment, RunOptions};

    #[test]
    fn writes_return_and_tv_curves() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..2 {
            let cfg = TrainerConfig {
                seed,
                n: 64,
                big_n: 128,
                total_steps: 192,
                minibatches: 4,
                epochs: 1,
                hidden: vec![4],
                eval_episodes: 1,
                ..Default::default()
            };
            let opts = RunOptions {
                out_dir: Some(dir.path().join(format!("seed{seed}"))),
                ..Default::default()
            };
            run_experiment(&cfg, &opts).unwrap();
        }
        let files = emit_plot_data(dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let tv = fs::read_to_string(&files[1]).unwrap();
        let lines: Vec<&str> = tv.lines().collect();
        assert_eq!(lines[0], "steps,mean,stderr,target");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("64,"));
        assert!(lines[1].ends_with(",0.05"));
        assert!(emit_plot_data(&dir.path().join("seed0").join(PLOT_DIR)).is_err());
    }
}
