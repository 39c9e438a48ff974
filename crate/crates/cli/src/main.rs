//! `sol-bench`: runs the landing solvers on synthetic instances and writes
//! trace files.
//!
//! Exit codes: 0 converged or check passed, 1 configuration or I/O error,
//! 2 iteration budget exhausted or check failed, 3 inner solver failure.

mod commands;
mod config;
mod instance;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use sol_landing::driver::{StoppingRule, Variant};
use sol_landing::Execution;

use crate::commands::EXIT_ERROR;
use crate::config::{ProblemKind, RunConfig};

#[derive(Parser)]
#[command(name = "sol-bench", version, about = "Benchmark harness for second-order landing methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Warm-start, run one solver variant and write its trace.
    Solve(Common),
    /// One-step error contraction around a converged solution.
    OrderCheck(Common),
    /// Run several variants on the same instance.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Variants to run when at most one config file is given.
        #[arg(long, value_delimiter = ',', value_parser = enum_value::<Variant>)]
        variants: Option<Vec<Variant>>,
    },
}

/// Config files plus one flag per config field. Flags override the files.
#[derive(Args, Default)]
struct Common {
    /// JSON config file; `compare` takes one per run.
    #[arg(long = "config", short = 'c')]
    configs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    problem: Option<ProblemKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_parser = enum_value::<Variant>)]
    variant: Option<Variant>,
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    zeta_max: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    first_order_step: Option<f64>,
    #[arg(long)]
    inner_max_iter: Option<usize>,
    #[arg(long, value_parser = enum_value::<StoppingRule>)]
    stopping_rule: Option<StoppingRule>,
    #[arg(long)]
    warm_start: Option<bool>,
    #[arg(long, allow_negative_numbers = true)]
    warm_start_target: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    warm_start_step: Option<f64>,
    #[arg(long)]
    warm_start_max_iter: Option<usize>,
    #[arg(long, value_parser = enum_value::<Execution>)]
    execution: Option<Execution>,
    /// Comma-separated perturbation sizes for `order-check`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    order_floor: Option<f64>,
    /// Output directory; overrides the config file and the environment.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Stem of the output files.
    #[arg(long)]
    name: Option<String>,
}

/// Parses a kebab-case enum value the same way the config file does.
fn enum_value<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

macro_rules! override_fields {
    ($flags:expr, $cfg:expr, [$($field:ident),*], [$($opt:ident),*]) => {
        $(if let Some(v) = $flags.$field.clone() { $cfg.$field = v; })*
        $(if let Some(v) = $flags.$opt.clone() { $cfg.$opt = Some(v); })*
    };
}

impl Common {
    fn apply(&self, cfg: &mut RunConfig) {
        override_fields!(
            self,
            cfg,
            [
                problem,
                seed,
                variant,
                eps,
                lambda,
                tol,
                max_iter,
                zeta_max,
                theta,
                first_order_step,
                stopping_rule,
                warm_start,
                warm_start_max_iter,
                execution,
                grid,
                order_floor
            ],
            [samples, n, d, p, sigma, inner_max_iter, warm_start_target, warm_start_step, name]
        );
        cfg.resolve_out_dir(self.out_dir.clone());
    }

    /// Defaults, then each config file, then the environment, then flags.
    fn configs(&self) -> anyhow::Result<Vec<RunConfig>> {
        let mut base = if self.configs.is_empty() {
            vec![RunConfig::default()]
        } else {
            self.configs
                .iter()
                .map(|p| RunConfig::from_file(p))
                .collect::<anyhow::Result<_>>()?
        };
        for cfg in &mut base {
            self.apply(cfg);
        }
        Ok(base)
    }

    fn single(&self) -> anyhow::Result<RunConfig> {
        let mut all = self.configs()?;
        if all.len() > 1 {
            anyhow::bail!("this command takes at most one --config");
        }
        Ok(all.remove(0))
    }
}

const DEFAULT_COMPARE: [Variant; 3] = [Variant::Sol, Variant::SolSym, Variant::FirstOrder];

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Solve(common) => commands::cmd_solve(&common.single()?),
        Command::OrderCheck(common) => commands::cmd_order_check(&common.single()?),
        Command::Compare { common, variants } => {
            let mut configs = common.configs()?;
            if configs.len() == 1 {
                let base = configs.remove(0);
                configs = variants
                    .unwrap_or_else(|| DEFAULT_COMPARE.to_vec())
                    .into_iter()
                    .map(|variant| RunConfig {
                        variant,
                        ..base.clone()
                    })
                    .collect();
            } else if variants.is_some() {
                anyhow::bail!("--variants cannot be combined with several --config files");
            }
            let Some(first) = configs.first() else {
                anyhow::bail!("compare needs at least one variant");
            };
            let stem = first
                .name
                .clone()
                .unwrap_or_else(|| format!("{}_seed{}", first.problem.name(), first.seed));
            commands::cmd_compare(&configs, &stem)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
