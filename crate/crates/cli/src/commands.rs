//! The three subcommands. Each returns the process exit code; errors are
//! reported by the caller with code 1.

use anyhow::{bail, Result};
use serde::Serialize;
use sol_landing::convergence::{one_step_order, OneStepOrder};
use sol_landing::driver::{first_order_landing_solve, IterTrace};
use sol_landing::fields::{CountingProblem, EvalCounts};
use sol_landing::{solve, AmbientPoint, SolverConfig, Status, Variant};

use crate::config::{ProblemSpec, RunConfig};
use crate::instance::Instance;
use crate::report::{float, output_path, write_csv, write_json, write_trace};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_INNER_FAILURE: u8 = 3;

/// Slope a second-order variant must reach in `order-check`.
pub const QUADRATIC_SLOPE: f64 = 1.8;
/// Slope the Riemannian Newton contrast must stay under.
pub const RN_SLOPE_MAX: f64 = 1.3;

pub fn status_code(status: Status) -> u8 {
    match status {
        Status::Converged => EXIT_OK,
        Status::MaxIter => EXIT_NOT_CONVERGED,
        Status::InnerFailure => EXIT_INNER_FAILURE,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FinalState {
    pub f_value: f64,
    pub grad_norm: f64,
    pub feas: f64,
}

impl From<&IterTrace> for FinalState {
    fn from(t: &IterTrace) -> Self {
        Self {
            f_value: t.f_value,
            grad_norm: t.grad_norm,
            feas: t.feas,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WarmStartSummary {
    pub status: &'static str,
    pub iterations: usize,
    pub target: f64,
    pub step: f64,
    pub wall_time_s: f64,
    pub evaluations: EvalCounts,
    #[serde(rename = "final")]
    pub final_state: FinalState,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub tool_version: &'static str,
    pub library_version: &'static str,
    pub name: String,
    pub instance_hash: String,
    pub instance: ProblemSpec,
    pub seed: u64,
    pub variant: Variant,
    pub status: &'static str,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub inner_failures: usize,
    pub wall_time_s: f64,
    #[serde(rename = "final")]
    pub final_state: FinalState,
    pub evaluations: EvalCounts,
    pub warm_start: Option<WarmStartSummary>,
    pub trace_file: String,
    pub config: RunConfig,
}

pub struct Run {
    pub summary: RunSummary,
    pub status: Status,
    pub point: AmbientPoint,
    pub traces: Vec<IterTrace>,
    pub warm_traces: Option<Vec<IterTrace>>,
}

/// Starting point, optional first-order warm start, then the configured
/// variant.
pub fn execute(cfg: &RunConfig, inst: &Instance, name: &str) -> Result<Run> {
    let x0 = inst.start(cfg.seed)?;
    let (x_start, warm, warm_traces) = if cfg.warm_start {
        let counted = CountingProblem::new(&inst.problem);
        let ws = cfg.warm_start_solver();
        let res = first_order_landing_solve(&counted, &x0, &ws, cfg.warm_start_target())?;
        let summary = WarmStartSummary {
            status: res.status.as_str(),
            iterations: res.iterations(),
            target: cfg.warm_start_target(),
            step: ws.first_order_step,
            wall_time_s: res.final_trace().wall_time_s,
            evaluations: counted.counts(),
            final_state: res.final_trace().into(),
        };
        (res.point, Some(summary), Some(res.traces))
    } else {
        (x0, None, None)
    };

    let counted = CountingProblem::new(&inst.problem);
    let res = solve(&counted, &x_start, &cfg.solver())?;
    let last = res.final_trace();
    let summary = RunSummary {
        tool_version: env!("CARGO_PKG_VERSION"),
        library_version: sol_landing::VERSION,
        name: name.to_owned(),
        instance_hash: inst.hash.clone(),
        instance: inst.spec,
        seed: cfg.seed,
        variant: cfg.variant,
        status: res.status.as_str(),
        iterations: res.iterations(),
        inner_iterations: res.traces.iter().map(|t| t.inner_iters).sum(),
        inner_failures: res.inner_failures(),
        wall_time_s: last.wall_time_s,
        final_state: last.into(),
        evaluations: counted.counts(),
        warm_start: warm,
        trace_file: format!("{name}.csv"),
        config: cfg.clone(),
    };
    Ok(Run {
        summary,
        status: res.status,
        point: res.point,
        traces: res.traces,
        warm_traces,
    })
}

/// Writes `{name}.csv`, `{name}.json` and, after a warm start,
/// `{name}_warm.csv`.
fn write_run(cfg: &RunConfig, run: &Run) -> Result<()> {
    let dir = cfg.out_dir();
    let name = &run.summary.name;
    write_trace(&output_path(&dir, name, ".csv")?, &run.traces)?;
    if let Some(warm) = &run.warm_traces {
        write_trace(&output_path(&dir, name, "_warm.csv")?, warm)?;
    }
    write_json(&output_path(&dir, name, ".json")?, &run.summary)
}

fn describe(run: &Run) -> String {
    let s = &run.summary;
    let mut line = format!(
        "{}: {} after {} iterations ({:.3} s), grad_norm {:.3e}, feas {:.3e}, hvp {}",
        s.name,
        s.status,
        s.iterations,
        s.wall_time_s,
        s.final_state.grad_norm,
        s.final_state.feas,
        s.evaluations.hvp
    );
    if let Some(w) = &s.warm_start {
        line.push_str(&format!(
            " [warm start: {} first-order iterations to grad_norm {:.3e}]",
            w.iterations, w.final_state.grad_norm
        ));
    }
    line
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<u8> {
    cfg.validate()?;
    let inst = Instance::generate(cfg)?;
    let run = execute(cfg, &inst, &cfg.stem())?;
    write_run(cfg, &run)?;
    println!("{}", describe(&run));
    println!("instance {}", inst.hash);
    println!("wrote {}", cfg.out_dir().join(format!("{}.{{csv,json}}", run.summary.name)).display());
    Ok(status_code(run.status))
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderReport {
    pub variant: Variant,
    pub e0: Vec<f64>,
    pub e1: Vec<f64>,
    pub slope: Option<f64>,
}

impl OrderReport {
    fn new(variant: Variant, o: OneStepOrder) -> Self {
        Self {
            variant,
            e0: o.e0,
            e1: o.e1,
            slope: o.slope,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderSummary {
    pub tool_version: &'static str,
    pub library_version: &'static str,
    pub name: String,
    pub instance_hash: String,
    pub instance: ProblemSpec,
    pub reference_status: &'static str,
    pub reference_iterations: usize,
    pub reference_grad_norm: f64,
    pub reference_feas: f64,
    pub floor: f64,
    pub quadratic_slope: f64,
    pub rn_slope_max: f64,
    pub runs: Vec<OrderReport>,
    pub passed: bool,
    pub config: RunConfig,
}

/// Tolerance of the reference solve: the one-step errors are measured against
/// it, so it must sit below the smallest error that enters the fit.
const REFERENCE_TOL: f64 = 1e-13;

pub fn cmd_order_check(cfg: &RunConfig) -> Result<u8> {
    cfg.validate()?;
    if !cfg.variant.is_second_order() {
        bail!("invalid parameter `variant`: order-check needs a second-order variant, got `first-order`");
    }
    let inst = Instance::generate(cfg)?;
    let name = format!("{}_order", cfg.stem());
    let reference_cfg = RunConfig {
        tol: cfg.tol.min(REFERENCE_TOL),
        ..cfg.clone()
    };
    let reference = execute(&reference_cfg, &inst, &name)?;
    let x_star_trace = reference.summary.final_state.clone();
    if reference.status != Status::Converged {
        println!(
            "reference solve ended with {} (grad_norm {:.3e}, feas {:.3e}); no order estimate",
            reference.summary.status, x_star_trace.grad_norm, x_star_trace.feas
        );
        return Ok(EXIT_NOT_CONVERGED);
    }
    let x_star = &reference.point;

    let mut variants = vec![cfg.variant];
    if cfg.variant != Variant::RiemannianNewton {
        variants.push(Variant::RiemannianNewton);
    }
    let mut runs = Vec::new();
    for variant in variants {
        let step_cfg = SolverConfig {
            variant,
            ..cfg.solver()
        };
        let o = one_step_order(&inst.problem, x_star, &cfg.grid, &step_cfg, cfg.seed, cfg.order_floor, cfg.execution)?;
        runs.push(OrderReport::new(variant, o));
    }

    let main_ok = runs[0].slope.is_some_and(|s| s >= QUADRATIC_SLOPE);
    let contrast_ok = runs.get(1).is_none_or(|r| r.slope.is_some_and(|s| s <= RN_SLOPE_MAX));
    let passed = main_ok && contrast_ok;

    let dir = cfg.out_dir();
    let mut header = vec!["e0".to_owned()];
    header.extend(runs.iter().map(|r| format!("e1_{}", r.variant.name())));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..cfg.grid.len()).map(|i| {
        let mut row = vec![float(runs[0].e0[i])];
        row.extend(runs.iter().map(|r| float(r.e1[i])));
        row
    });
    write_csv(&output_path(&dir, &name, ".csv")?, &header, rows)?;
    let summary = OrderSummary {
        tool_version: env!("CARGO_PKG_VERSION"),
        library_version: sol_landing::VERSION,
        name: name.clone(),
        instance_hash: inst.hash.clone(),
        instance: inst.spec,
        reference_status: reference.summary.status,
        reference_iterations: reference.summary.iterations,
        reference_grad_norm: x_star_trace.grad_norm,
        reference_feas: x_star_trace.feas,
        floor: cfg.order_floor,
        quadratic_slope: QUADRATIC_SLOPE,
        rn_slope_max: RN_SLOPE_MAX,
        runs: runs.clone(),
        passed,
        config: cfg.clone(),
    };
    write_json(&output_path(&dir, &name, ".json")?, &summary)?;

    for r in &runs {
        let slope = r.slope.map_or("none".to_owned(), |s| format!("{s:.3}"));
        println!("{}: slope {slope}", r.variant.name());
    }
    println!(
        "{} (need {} >= {QUADRATIC_SLOPE}{})",
        if passed { "PASS" } else { "FAIL" },
        cfg.variant.name(),
        if runs.len() > 1 {
            format!(", riemannian-newton <= {RN_SLOPE_MAX}")
        } else {
            String::new()
        }
    );
    println!("wrote {}", dir.join(format!("{name}.{{csv,json}}")).display());
    Ok(if passed { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub name: String,
    pub variant: Variant,
    pub status: &'static str,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub grad_norm: f64,
    pub feas: f64,
    pub hvp: u64,
    pub grad_evals: u64,
    pub inner_iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareSummary {
    pub tool_version: &'static str,
    pub library_version: &'static str,
    pub name: String,
    pub instance_hash: String,
    pub instance: ProblemSpec,
    pub runs: Vec<CompareRow>,
    pub all_second_order_converged: bool,
}

/// Runs every config on one shared instance. Configs whose instances hash
/// differently are rejected before anything runs.
pub fn cmd_compare(configs: &[RunConfig], base: &str) -> Result<u8> {
    if configs.is_empty() {
        bail!("compare needs at least one run");
    }
    let mut instances = Vec::with_capacity(configs.len());
    for cfg in configs {
        cfg.validate()?;
        instances.push(Instance::generate(cfg)?);
    }
    let hash = instances[0].hash.clone();
    for (cfg, inst) in configs.iter().zip(&instances).skip(1) {
        if inst.hash != hash {
            bail!(
                "mismatched instances: `{}` (seed {}) hashes to {}, the first run to {}",
                cfg.stem(),
                cfg.seed,
                inst.hash,
                hash
            );
        }
    }
    let names = run_names(configs, base);

    let jobs: Vec<(usize, &RunConfig)> = configs.iter().enumerate().collect();
    let job = |&(i, cfg): &(usize, &RunConfig)| execute(cfg, &instances[i], &names[i]);
    #[cfg(feature = "parallel")]
    let runs: Vec<Result<Run>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<Result<Run>> = jobs.iter().map(job).collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    for (cfg, run) in configs.iter().zip(&runs) {
        write_run(cfg, run)?;
        println!("{}", describe(run));
    }
    let rows: Vec<CompareRow> = runs
        .iter()
        .map(|r| {
            let s = &r.summary;
            CompareRow {
                name: s.name.clone(),
                variant: s.variant,
                status: s.status,
                iterations: s.iterations,
                wall_time_s: s.wall_time_s,
                grad_norm: s.final_state.grad_norm,
                feas: s.final_state.feas,
                hvp: s.evaluations.hvp,
                grad_evals: s.evaluations.grad,
                inner_iterations: s.inner_iterations,
            }
        })
        .collect();
    let all_converged = runs
        .iter()
        .filter(|r| r.summary.variant.is_second_order())
        .all(|r| r.status == Status::Converged);

    let dir = configs[0].out_dir();
    let name = format!("{base}_compare");
    write_csv(
        &output_path(&dir, &name, ".csv")?,
        &["name", "variant", "status", "iterations", "wall_time_s", "grad_norm", "feas", "hvp", "grad_evals", "inner_iterations"],
        rows.iter().map(|r| {
            vec![
                r.name.clone(),
                r.variant.name().to_owned(),
                r.status.to_owned(),
                r.iterations.to_string(),
                float(r.wall_time_s),
                float(r.grad_norm),
                float(r.feas),
                r.hvp.to_string(),
                r.grad_evals.to_string(),
                r.inner_iterations.to_string(),
            ]
        }),
    )?;
    write_json(
        &output_path(&dir, &name, ".json")?,
        &CompareSummary {
            tool_version: env!("CARGO_PKG_VERSION"),
            library_version: sol_landing::VERSION,
            name: name.clone(),
            instance_hash: hash.clone(),
            instance: instances[0].spec,
            runs: rows,
            all_second_order_converged: all_converged,
        },
    )?;
    println!("instance {hash}");
    println!("wrote {}", dir.join(format!("{name}.{{csv,json}}")).display());
    Ok(if all_converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

/// `{base}_{variant}`, with a numeric suffix when two runs share a variant.
fn run_names(configs: &[RunConfig], base: &str) -> Vec<String> {
    let names: Vec<String> = configs
        .iter()
        .map(|c| format!("{base}_{}", c.variant.name()))
        .collect();
    names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            if names.iter().filter(|m| *m == n).count() > 1 {
                format!("{n}_{i}")
            } else {
                n.clone()
            }
        })
        .collect()
}
