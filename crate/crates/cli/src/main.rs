use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use geppo::config::TrainerConfig;
use geppo::harness::{self, RunOptions, RunRecord, Suite};
use geppo::weights::{epsilon_mapping, WeightProgram};

#[derive(Parser)]
#[command(
    name = "geppo",
    version,
    about = "Train, compare and certify clipped policy optimization with sample reuse"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed and write metrics, summary and checkpoints.
    Train {
        /// JSON configuration; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: runs/<env>_<algorithm>_seed<k>]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Return level whose first crossing is recorded in the summary.
        #[arg(long, allow_negative_numbers = true)]
        threshold: Option<f64>,
    },
    /// Compare two run groups (baseline first) and print a CSV table.
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a certification suite and print a JSON report.
    Verify {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(Suite::NAMES))]
        suite: String,
        #[arg(long, default_value_t = harness::verify::DEFAULT_SEED)]
        seed: u64,
    },
    /// Write return and TV curves for every run group under a directory.
    Plot { dir: PathBuf },
    /// Solve for the policy weights and print the derived settings.
    Weights {
        /// Ratio of the required batch size to the collected batch size.
        #[arg(long = "B", short = 'B')]
        b: u32,
        #[arg(long, default_value = "essopt")]
        program: WeightProgram,
        /// Maximum number of prior policies considered.
        #[arg(long, default_value_t = 8)]
        m_bar: usize,
        #[arg(long, default_value_t = 0.2)]
        eps_ppo: f64,
    },
}

fn train(
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threshold: Option<f64>,
) -> Result<()> {
    let (mut cfg, mut overrides) = match config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            harness::load_config(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => (TrainerConfig::default(), Vec::new()),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
        overrides.retain(|k| k != "seed");
        if seed != TrainerConfig::default().seed {
            overrides.push("seed".into());
            overrides.sort();
        }
    }
    let out = out.unwrap_or_else(|| {
        PathBuf::from("runs").join(format!(
            "{}_{}_seed{}",
            cfg.env.as_str(),
            cfg.algorithm.name(),
            cfg.seed
        ))
    });
    let opts = RunOptions {
        out_dir: Some(out.clone()),
        overrides,
        threshold,
    };
    let record = harness::run_experiment(&cfg, &opts)?;
    println!("{}", serde_json::to_string_pretty(&record.summary)?);
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn compare(baseline: &Path, candidate: &Path, out: Option<&Path>) -> Result<()> {
    let a =
        RunRecord::load_all(baseline).with_context(|| format!("loading {}", baseline.display()))?;
    let b = RunRecord::load_all(candidate)
        .with_context(|| format!("loading {}", candidate.display()))?;
    if a.is_empty() || b.is_empty() {
        bail!("each directory must contain at least one run");
    }
    let csv = harness::compare(&a, &b)?.to_csv();
    print!("{csv}");
    if let Some(path) = out {
        fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn weights(b: u32, program: WeightProgram, m_bar: usize, eps_ppo: f64) -> Result<()> {
    let nu = program.solve(b as f64, m_bar)?.trimmed();
    let report = serde_json::json!({
        "program": program.name(),
        "B": b,
        "m_bar": m_bar,
        "nu": nu.as_slice(),
        "effective_m": nu.effective_m(),
        "epsilon_geppo": epsilon_mapping(&nu, eps_ppo)?,
        // Effective sample size relative to the batch PPO would collect.
        "ess_factor": nu.ess_per_n() / b as f64,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            threshold,
        } => train(config.as_deref(), seed, out, threshold)?,
        Command::Compare {
            baseline,
            candidate,
            out,
        } => compare(&baseline, &candidate, out.as_deref())?,
        Command::Verify { suite, seed } => {
            let report = harness::verify(suite.parse()?, seed)?;
            println!("{}", report.to_json_pretty());
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Plot { dir } => {
            for path in harness::emit_plot_data(&dir)? {
                println!("{}", path.display());
            }
        }
        Command::Weights {
            b,
            program,
            m_bar,
            eps_ppo,
        } => weights(b, program, m_bar, eps_ppo)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
