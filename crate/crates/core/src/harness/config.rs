//! JSON experiment configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::DataFormat;
use crate::error::{Error, Result};
use crate::kernels::{Degree, KernelSpec};
use crate::manifold::TrConfig;
use crate::mkl::{NormOrder, SolverConfig};
use crate::svm::SvmConfig;

/// Only split generator this build understands.
pub const RNG_NAME: &str = "chacha8-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Regression,
    Classification,
    SvmClassification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pgd,
    Iia,
    Riia,
    Pgd2,
    Rpgd2,
    SvmGmkl,
    Tr,
    Bm,
    Unif,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pgd => "pgd",
            Algorithm::Iia => "iia",
            Algorithm::Riia => "riia",
            Algorithm::Pgd2 => "pgd2",
            Algorithm::Rpgd2 => "rpgd2",
            Algorithm::SvmGmkl => "svm_gmkl",
            Algorithm::Tr => "tr",
            Algorithm::Bm => "bm",
            Algorithm::Unif => "unif",
        }
    }

    /// Degree implied by the algorithm, if any.
    pub fn fixed_degree(self) -> Option<Degree> {
        match self {
            Algorithm::Pgd | Algorithm::Iia | Algorithm::Riia => Some(Degree::Linear),
            Algorithm::Pgd2 | Algorithm::Rpgd2 => Some(Degree::Quadratic),
            _ => None,
        }
    }

    /// Searches over the region radius.
    pub fn uses_radius(self) -> bool {
        matches!(self, Algorithm::Pgd | Algorithm::Iia | Algorithm::Pgd2 | Algorithm::SvmGmkl | Algorithm::Tr)
    }

    /// Searches over the ridge penalty on the weights.
    pub fn uses_beta(self) -> bool {
        matches!(self, Algorithm::Riia | Algorithm::Rpgd2)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub format: DataFormat,
}

/// Optional solver overrides; unset fields keep library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub printed_step_sign: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svm_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svm_max_updates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tr_delta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tr_delta_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tr_accept: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tr_grad_tol: Option<f64>,
}

fn default_lambda_grid() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0]
}
fn default_radius_grid() -> Vec<f64> {
    vec![0.001, 0.1, 0.5, 1.0, 2.0, 10.0]
}
fn default_beta_grid() -> Vec<f64> {
    vec![0.01, 0.1, 1.0]
}
fn default_cv_folds() -> usize {
    10
}
fn default_n_splits() -> usize {
    30
}
fn default_split_fraction() -> f64 {
    0.5
}
fn default_rng() -> String {
    RNG_NAME.to_string()
}
fn default_mu0() -> f64 {
    1.0
}
fn default_q() -> NormOrder {
    NormOrder::L2
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// Base kernels; the default Gaussian bank when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<KernelSpec>>,
    #[serde(default)]
    pub task: Task,
    pub algorithm: Algorithm,
    /// Required for algorithms without an implied degree (`svm_gmkl`, `tr`, `bm`, `unif`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<Degree>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(rename = "Lambda_grid", default = "default_radius_grid")]
    pub radius_grid: Vec<f64>,
    #[serde(default = "default_beta_grid")]
    pub beta_grid: Vec<f64>,
    #[serde(default = "default_mu0")]
    pub mu0: f64,
    #[serde(default = "default_q")]
    pub q: NormOrder,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default = "default_n_splits")]
    pub n_splits: usize,
    #[serde(default = "default_split_fraction")]
    pub split_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rng")]
    pub rng: String,
    #[serde(default)]
    pub solver: SolverOverrides,
    /// Search the final-fit lambda separately from the kernel-learning lambda.
    #[serde(default)]
    pub decouple_lambda: bool,
    /// Also evaluate the best-single-kernel and uniform baselines.
    #[serde(default = "default_true")]
    pub baselines: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates; a relative dataset path is resolved against the config's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if cfg.dataset.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset.path = dir.join(&cfg.dataset.path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        for (name, grid) in [("lambda_grid", &self.lambda_grid), ("Lambda_grid", &self.radius_grid), ("beta_grid", &self.beta_grid)] {
            if grid.is_empty() {
                return err(format!("{name} must be non-empty"));
            }
            if grid.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return err(format!("{name} values must be positive and finite"));
            }
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return err(format!("split_fraction must lie in (0, 1), got {}", self.split_fraction));
        }
        if self.cv_folds < 2 {
            return err("cv_folds must be at least 2".into());
        }
        if self.n_splits == 0 {
            return err("n_splits must be at least 1".into());
        }
        if !(self.mu0 >= 0.0 && self.mu0.is_finite()) {
            return err("mu0 must be non-negative".into());
        }
        if self.rng != RNG_NAME {
            return err(format!("unsupported rng {:?}; expected {RNG_NAME:?}", self.rng));
        }
        if let Some(k) = &self.kernels {
            if k.is_empty() {
                return err("kernels must be non-empty when given".into());
            }
        }
        let svm_task = self.task == Task::SvmClassification;
        match (self.algorithm, svm_task) {
            (Algorithm::SvmGmkl, false) => return err("svm_gmkl requires task svm_classification".into()),
            (Algorithm::Bm | Algorithm::Unif | Algorithm::SvmGmkl, true) => {}
            (a, true) => return err(format!("{} is a KRR algorithm; use task regression or classification", a.name())),
            _ => {}
        }
        match (self.algorithm.fixed_degree(), self.degree) {
            (Some(d), Some(given)) if d != given => {
                return err(format!("{} implies degree {}, config says {}", self.algorithm.name(), d.as_u8(), given.as_u8()))
            }
            (None, None) => return err(format!("{} needs an explicit degree", self.algorithm.name())),
            _ => {}
        }
        if self.algorithm == Algorithm::Tr && self.q != NormOrder::L2 {
            return err("tr requires q = 2".into());
        }
        if self.algorithm == Algorithm::Iia && self.q != NormOrder::L2 {
            return err("iia requires q = 2".into());
        }
        if self.algorithm == Algorithm::Tr {
            if let Some(&bad) = self.radius_grid.iter().find(|&&r| r > self.mu0) {
                return err(format!("tr needs Lambda <= mu0 so the sphere stays non-negative; {bad} > {}", self.mu0));
            }
        }
        self.solver_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn degree(&self) -> Degree {
        self.algorithm.fixed_degree().or(self.degree).unwrap_or(Degree::Linear)
    }

    pub fn is_classification(&self) -> bool {
        self.task != Task::Regression
    }

    /// Solver settings for `algorithm` after overrides.
    pub fn solver_config(&self) -> SolverConfig<f64> {
        let base = match self.algorithm {
            Algorithm::Iia | Algorithm::Riia => SolverConfig::interpolated(),
            _ => SolverConfig::default(),
        };
        let o = &self.solver;
        SolverConfig {
            eta: o.eta.unwrap_or(base.eta),
            eps: o.eps.unwrap_or(base.eps),
            max_iter: o.max_iter.unwrap_or(base.max_iter),
            backoff: o.backoff.unwrap_or(base.backoff),
            seed: self.seed,
            mu_init: None,
            printed_step_sign: o.printed_step_sign.unwrap_or(false),
        }
    }

    pub fn svm_config(&self) -> SvmConfig<f64> {
        let d = SvmConfig::default();
        SvmConfig { tol: self.solver.svm_tol.unwrap_or(d.tol), max_updates: self.solver.svm_max_updates.unwrap_or(d.max_updates) }
    }

    pub fn tr_config(&self) -> TrConfig<f64> {
        let d = TrConfig::default();
        let o = &self.solver;
        TrConfig {
            delta_max: o.tr_delta_max,
            delta0: o.tr_delta0,
            accept: o.tr_accept.unwrap_or(d.accept),
            grad_tol: o.tr_grad_tol.unwrap_or(d.grad_tol),
            max_iter: o.max_iter.unwrap_or(d.max_iter),
            mu_init: None,
        }
    }
}
