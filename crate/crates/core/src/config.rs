//! Training configuration and its resolution into concrete algorithm settings.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{EnvConfig, EnvName};
use crate::error::{invalid, Result};
use crate::estimation::EstimatorConfig;
use crate::weights::{epsilon_mapping, PolicyWeights, WeightProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ppo,
    #[default]
    Geppo,
    /// PPO with the adaptive learning rate.
    PpoAdapt,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ppo => "ppo",
            Algorithm::Geppo => "geppo",
            Algorithm::PpoAdapt => "ppo_adapt",
        }
    }
}

/// Which samples the per-iteration TV estimate is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TvMode {
    /// Full assembled set, once after all epochs.
    #[default]
    PostUpdate,
    /// Average of per-minibatch estimates taken after each gradient step.
    MinibatchAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub env: EnvName,
    pub env_params: EnvConfig,
    pub seed: u64,
    pub total_steps: u64,
    /// Minimum batch collected per GePPO iteration.
    pub n: usize,
    /// Batch size PPO collects per iteration.
    #[serde(rename = "N")]
    pub big_n: usize,
    pub m_bar: usize,
    pub weight_program: WeightProgram,
    pub eps_ppo: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub c_bar: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta0: f64,
    pub value_lr: f64,
    /// Global L2 cap applied to each minibatch gradient; `None` disables it.
    pub max_grad_norm: Option<f64>,
    pub minibatches: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub init_std_multiple: f64,
    pub eval_episodes: usize,
    pub tv_mode: TvMode,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Geppo,
            env: EnvName::PointMass,
            env_params: EnvConfig::default(),
            seed: 0,
            total_steps: 1_000_000,
            n: 1024,
            big_n: 2048,
            m_bar: 8,
            weight_program: WeightProgram::Essopt,
            eps_ppo: 0.2,
            gamma: 0.995,
            lambda: 0.97,
            c_bar: 1.0,
            alpha: 0.03,
            beta: 0.5,
            eta0: 3e-4,
            value_lr: 3e-4,
            max_grad_norm: Some(0.5),
            minibatches: 32,
            epochs: 10,
            hidden: vec![64, 64],
            init_std_multiple: 1.0,
            eval_episodes: 10,
            tv_mode: TvMode::PostUpdate,
        }
    }
}

/// Algorithm settings derived from a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    /// Transitions collected per iteration.
    pub batch_size: usize,
    /// `N / n`; 1 for the PPO variants.
    pub b: usize,
    pub nu: PolicyWeights,
    /// Number of policies with nonzero weight.
    pub m: usize,
    pub epsilon: f64,
    pub adaptive_lr: bool,
    pub iterations: u64,
}

impl TrainerConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: TrainerConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            gamma: self.gamma,
            lambda: self.lambda,
            c_bar: self.c_bar,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.big_n == 0 {
            return Err(invalid("batch sizes must be positive"));
        }
        if self.big_n % self.n != 0 {
            return Err(invalid(format!(
                "N = {} is not a multiple of n = {}",
                self.big_n, self.n
            )));
        }
        if self.m_bar == 0 {
            return Err(invalid("m_bar must be positive"));
        }
        if !(self.eps_ppo > 0.0 && self.eps_ppo < 1.0) {
            return Err(invalid(format!("eps_ppo {} outside (0, 1)", self.eps_ppo)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(invalid(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        self.estimator().validate()?;
        if !(self.alpha.is_finite() && self.alpha >= 0.0) || !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid("alpha must be nonnegative and beta in [0, 1]"));
        }
        if !positive(self.eta0) || !positive(self.value_lr) {
            return Err(invalid("learning rates must be positive"));
        }
        if self.max_grad_norm.is_some_and(|g| !positive(g)) {
            return Err(invalid("max_grad_norm must be positive"));
        }
        if self.minibatches == 0 || self.epochs == 0 {
            return Err(invalid("minibatches and epochs must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden layer sizes must be positive"));
        }
        if !positive(self.init_std_multiple) {
            return Err(invalid("init_std_multiple must be positive"));
        }
        if self.eval_episodes == 0 {
            return Err(invalid("eval_episodes must be positive"));
        }
        Ok(())
    }

    /// Batch size, policy weights, and clipping parameter for this run.
    pub fn resolve(&self) -> Result<Resolved> {
        self.validate()?;
        let (batch_size, b, nu, adaptive_lr) = match self.algorithm {
            Algorithm::Ppo | Algorithm::PpoAdapt => (
                self.big_n,
                1,
                PolicyWeights::uniform(1),
                self.algorithm == Algorithm::PpoAdapt,
            ),
            Algorithm::Geppo => {
                let b = self.big_n / self.n;
                let nu = self.weight_program.solve(b as f64, self.m_bar)?.trimmed();
                (self.n, b, nu, true)
            }
        };
        if batch_size < self.minibatches {
            return Err(invalid("fewer transitions per iteration than minibatches"));
        }
        let epsilon = epsilon_mapping(&nu, self.eps_ppo)?;
        Ok(Resolved {
            batch_size,
            b,
            m: nu.effective_m(),
            nu,
            epsilon,
            adaptive_lr,
            iterations: self.total_steps / batch_size as u64,
        })
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// False for NaN as well as for nonpositive values.
fn positive(x: f64) -> bool {
    x > 0.0
}

/// Parses a configuration document and lists the top-level keys whose
/// values differ from the defaults.
pub fn parse_with_overrides(s: &str) -> Result<(TrainerConfig, Vec<String>)> {
    let doc: serde_json::Value = serde_json::from_str(s)?;
    let cfg: TrainerConfig = serde_json::from_value(doc.clone())?;
    cfg.validate()?;
    let defaults = serde_json::to_value(TrainerConfig::default())?;
    let mut overrides = Vec::new();
    if let (Some(given), Some(base)) = (doc.as_object(), defaults.as_object()) {
        for (k, v) in given {
            if base.get(k) != Some(v) {
                overrides.push(k.clone());
            }
        }
    }
    overrides.sort();
    Ok((cfg, overrides))
}
