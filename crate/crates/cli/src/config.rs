//! Run configuration: one flat JSON object, overridden field by field from
//! the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sol_landing::driver::{StoppingRule, Variant};
use sol_landing::{Execution, SolverConfig};

/// Overrides the output directory of the config file; flags still win.
pub const OUT_DIR_ENV: &str = "SOL_BENCH_OUT_DIR";

pub const DEFAULT_GRID: [f64; 5] = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Procrustes,
    Pca,
    Ica,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Procrustes => "procrustes",
            ProblemKind::Pca => "pca",
            ProblemKind::Ica => "ica",
        }
    }
}

/// Everything needed to reproduce one run. Problem sizes left unset take the
/// desk-scale defaults of the chosen problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub seed: u64,
    /// Rows of the data matrix (PCA, ICA).
    pub samples: Option<usize>,
    /// Procrustes: rows of `A`. PCA: ambient dimension.
    pub n: Option<usize>,
    /// Procrustes and ICA: dimension of the square unknown.
    pub d: Option<usize>,
    /// PCA: subspace dimension. ICA: number of components.
    pub p: Option<usize>,
    /// Noise level (Procrustes, PCA).
    pub sigma: Option<f64>,

    pub variant: Variant,
    pub eps: f64,
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub zeta_max: f64,
    pub theta: f64,
    pub first_order_step: f64,
    pub inner_max_iter: Option<usize>,
    pub stopping_rule: StoppingRule,

    /// Run the first-order landing method first.
    pub warm_start: bool,
    /// Riemannian gradient norm that ends the warm start; defaults to 1e-3
    /// for ICA and 1e-2 otherwise.
    pub warm_start_target: Option<f64>,
    /// Fixed step of the warm start; defaults to `first_order_step`.
    pub warm_start_step: Option<f64>,
    pub warm_start_max_iter: usize,

    pub execution: Execution,

    /// Perturbation sizes for `order-check`.
    pub grid: Vec<f64>,
    /// One-step errors at or below this are left out of the slope fit.
    pub order_floor: f64,

    pub out_dir: Option<PathBuf>,
    /// Stem of the output files; derived from problem, variant and seed when
    /// unset.
    pub name: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        Self {
            problem: ProblemKind::Procrustes,
            seed: 1,
            samples: None,
            n: None,
            d: None,
            p: None,
            sigma: None,
            variant: solver.variant,
            eps: solver.eps,
            lambda: solver.lambda,
            tol: solver.tol,
            max_iter: solver.max_iter,
            zeta_max: solver.zeta_max,
            theta: solver.theta,
            first_order_step: solver.first_order_step,
            inner_max_iter: solver.inner_max_iter,
            stopping_rule: solver.stopping_rule,
            warm_start: true,
            warm_start_target: None,
            warm_start_step: None,
            warm_start_max_iter: 20_000,
            execution: Execution::default(),
            grid: DEFAULT_GRID.to_vec(),
            order_floor: 1e-14,
            out_dir: None,
            name: None,
        }
    }
}

/// Problem sizes after defaults are filled in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "problem", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Procrustes { n: usize, d: usize, sigma: f64 },
    Pca { samples: usize, n: usize, p: usize, sigma: f64 },
    Ica { samples: usize, d: usize, p: usize },
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in config file {}", path.display()))
    }

    /// Parses a config; errors carry serde's line/column and the offending
    /// key.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let reject = |field: &str, set: bool| -> Result<()> {
            if set {
                bail!("field `{field}` does not apply to problem `{}`", self.problem.name());
            }
            Ok(())
        };
        Ok(match self.problem {
            ProblemKind::Procrustes => {
                reject("samples", self.samples.is_some())?;
                reject("p", self.p.is_some())?;
                ProblemSpec::Procrustes {
                    n: self.n.unwrap_or(200),
                    d: self.d.unwrap_or(20),
                    sigma: self.sigma.unwrap_or(0.02),
                }
            }
            ProblemKind::Pca => {
                reject("d", self.d.is_some())?;
                ProblemSpec::Pca {
                    samples: self.samples.unwrap_or(600),
                    n: self.n.unwrap_or(120),
                    p: self.p.unwrap_or(10),
                    sigma: self.sigma.unwrap_or(0.1),
                }
            }
            ProblemKind::Ica => {
                reject("n", self.n.is_some())?;
                reject("sigma", self.sigma.is_some())?;
                let d = self.d.unwrap_or(12);
                ProblemSpec::Ica {
                    samples: self.samples.unwrap_or(6000),
                    d,
                    p: self.p.unwrap_or(d),
                }
            }
        })
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            variant: self.variant,
            eps: self.eps,
            lambda: self.lambda,
            tol: self.tol,
            max_iter: self.max_iter,
            zeta_max: self.zeta_max,
            theta: self.theta,
            first_order_step: self.first_order_step,
            inner_max_iter: self.inner_max_iter,
            stopping_rule: self.stopping_rule,
            record_iterates: false,
        }
    }

    pub fn warm_start_target(&self) -> f64 {
        self.warm_start_target.unwrap_or(match self.problem {
            ProblemKind::Ica => 1e-3,
            _ => 1e-2,
        })
    }

    /// Solver settings of the first-order warm start.
    pub fn warm_start_solver(&self) -> SolverConfig {
        SolverConfig {
            variant: Variant::FirstOrder,
            max_iter: self.warm_start_max_iter,
            first_order_step: self.warm_start_step.unwrap_or(self.first_order_step),
            ..self.solver()
        }
    }

    /// Checks every field; the message names the first offending one.
    pub fn validate(&self) -> Result<()> {
        self.problem_spec()?;
        self.solver().validate()?;
        self.warm_start_solver().validate()?;
        let target = self.warm_start_target();
        if !(target > 0.0 && target.is_finite()) {
            bail!("invalid parameter `warm_start_target`: must be positive, got {target}");
        }
        if self.grid.is_empty() || self.grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            bail!("invalid parameter `grid`: must be a non-empty list of nonnegative numbers");
        }
        if self.order_floor.is_nan() || self.order_floor < 0.0 {
            bail!("invalid parameter `order_floor`: must be nonnegative");
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) {
                bail!("invalid parameter `name`: must be a non-empty file stem, got {name:?}");
            }
        }
        Ok(())
    }

    pub fn stem(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}_{}_seed{}", self.problem.name(), self.variant.name(), self.seed))
    }

    /// Output directory: flag, then environment, then config file, then
    /// `results`.
    pub fn resolve_out_dir(&mut self, flag: Option<PathBuf>) {
        if let Some(dir) = flag {
            self.out_dir = Some(dir);
        } else if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
            self.out_dir = Some(PathBuf::from(dir));
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"))
    }
}
