//! Experiment configuration: one flat TOML table per experiment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use loe_core::baselines::DescentOptions;
use loe_core::landmark::EdmProjection;
use loe_core::ranking::{LambdaRule, MleOptions, DEFAULT_LAMBDA_SCALE};
use loe_core::LoeConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    SingleRun,
    Consistency,
    Scalability,
    Warmstart,
    Clustering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Normal,
    Uniform,
    /// Gaussian blobs; see `clusters` and `separation`.
    Clustered,
}

/// Base of the logarithm in `m = ⌈c·n·log n⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    E,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::E => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Marks presets at the original (hours-long) scale.
    pub full_scale: bool,
    pub n: usize,
    /// Item counts to sweep; overrides `n` when non-empty.
    pub n_sweep: Vec<usize>,
    pub d: usize,
    /// LOE landmark count; `d + 3` when unset.
    pub landmarks: Option<usize>,
    /// Budget multiplier: `m = ⌈c·n·log n⌉`.
    pub c: f64,
    /// Multipliers to sweep; overrides `c` when non-empty.
    pub c_sweep: Vec<f64>,
    pub log_base: LogBase,
    /// Share of the budget spent on LOE inside `loe-ste`.
    pub epsilon: f64,
    /// Flip exact answers with this probability instead of using the
    /// logistic link.
    pub flip_probability: Option<f64>,
    pub distribution: Distribution,
    pub clusters: usize,
    /// Distance between cluster centers, in blob standard deviations.
    pub separation: f64,
    pub seeds: Vec<u64>,
    pub methods: Vec<String>,
    pub out: PathBuf,
    pub workers: usize,

    pub lambda_scale: f64,
    pub mle_tol: f64,
    pub mle_max_iters: usize,
    pub edm_projection: EdmProjection,
    pub descent_max_iters: usize,
    pub descent_rel_tol: f64,
    pub descent_grad_tol: f64,
    pub descent_minibatch: Option<usize>,
    /// Wall-clock cap per descent run, in seconds.
    pub descent_time_budget: Option<f64>,
    /// Sampled triplets for the prediction error; exhaustive when the
    /// instance has no more triplets than this.
    pub prediction_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mle = MleOptions::default();
        let descent = DescentOptions::default();
        Self {
            experiment: Experiment::SingleRun,
            full_scale: false,
            n: 1000,
            n_sweep: Vec::new(),
            d: 2,
            landmarks: None,
            c: 50.0,
            c_sweep: Vec::new(),
            log_base: LogBase::E,
            epsilon: 0.3,
            flip_probability: None,
            distribution: Distribution::Normal,
            clusters: 5,
            separation: 10.0,
            seeds: vec![0],
            methods: vec!["loe".into()],
            out: PathBuf::from("results"),
            workers: 1,
            lambda_scale: DEFAULT_LAMBDA_SCALE,
            mle_tol: mle.tol,
            mle_max_iters: mle.max_iters,
            edm_projection: EdmProjection::default(),
            descent_max_iters: descent.max_iters,
            descent_rel_tol: descent.rel_tol,
            descent_grad_tol: descent.grad_tol,
            descent_minibatch: descent.minibatch,
            descent_time_budget: descent.time_budget,
            prediction_samples: 200_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).context("parsing experiment config")?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let ns = self.n_values();
        if ns.iter().any(|&n| n < 3) {
            bail!("every n must be at least 3");
        }
        if self.d == 0 {
            bail!("d must be positive");
        }
        if let Some(l) = self.landmarks {
            if l < self.d + 3 {
                bail!("landmarks must be at least d + 3 = {}", self.d + 3);
            }
            if ns.iter().any(|&n| l > n) {
                bail!("landmarks ({l}) exceed the item count");
            }
        }
        if self.c_values().iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            bail!("every c must be positive and finite");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            bail!("epsilon must lie in (0, 1)");
        }
        if let Some(p) = self.flip_probability {
            if !(0.0..=0.5).contains(&p) {
                bail!("flip_probability must lie in [0, 0.5]");
            }
        }
        if self.distribution == Distribution::Clustered && self.clusters == 0 {
            bail!("clustered data needs at least one cluster");
        }
        if self.seeds.is_empty() {
            bail!("no seeds given");
        }
        if self.methods.is_empty() {
            bail!("no methods given");
        }
        if self.workers == 0 {
            bail!("workers must be positive");
        }
        if !(self.lambda_scale > 0.0) || !(self.mle_tol > 0.0) {
            bail!("lambda_scale and mle_tol must be positive");
        }
        if self.prediction_samples == 0 {
            bail!("prediction_samples must be positive");
        }
        Ok(())
    }

    pub fn n_values(&self) -> Vec<usize> {
        if self.n_sweep.is_empty() {
            vec![self.n]
        } else {
            self.n_sweep.clone()
        }
    }

    pub fn c_values(&self) -> Vec<f64> {
        if self.c_sweep.is_empty() {
            vec![self.c]
        } else {
            self.c_sweep.clone()
        }
    }

    /// `⌈c·n·log n⌉` in the configured base.
    pub fn budget(&self, n: usize, c: f64) -> usize {
        (c * n as f64 * self.log_base.log(n as f64)).ceil() as usize
    }

    pub fn loe_config(&self) -> LoeConfig {
        LoeConfig {
            landmarks: self.landmarks,
            lambda_rule: LambdaRule::Schedule {
                scale: self.lambda_scale,
            },
            mle: MleOptions {
                tol: self.mle_tol,
                max_iters: self.mle_max_iters,
            },
            projection: self.edm_projection,
            ..LoeConfig::default()
        }
    }

    pub fn descent_options(&self) -> DescentOptions {
        DescentOptions {
            max_iters: self.descent_max_iters,
            rel_tol: self.descent_rel_tol,
            grad_tol: self.descent_grad_tol,
            minibatch: self.descent_minibatch,
            time_budget: self.descent_time_budget,
            ..DescentOptions::default()
        }
    }
}
