//! Outer loops: the second-order landing method (SOL / SOL-sym), the naive
//! Riemannian-Newton landing used as a contrast, and the first-order landing
//! baseline used for warm starts.
//!
//! Every iteration builds `Lambda = T + N_1`, tries the unit step and falls
//! back to the largest step certified by [`safe_step_size`] when the trial
//! leaves the safe region. No retraction is ever applied.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{FieldContext, Problem};
use crate::geometry::{AmbientPoint, TangentVector};
use crate::krylov::{self, LinearMap, SolveReport};
use crate::linalg::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Approximate Newton equation `A_T[T] = b`, BiCGSTAB.
    Sol,
    /// Modified Newton equation `Hess f[T] = b`, MINRES in the metric `g`.
    SolSym,
    /// Plain Newton equation `Hess f[T] = -grad f` combined with `N_1`.
    /// Only a contrast for the convergence-order experiments.
    RiemannianNewton,
    /// `X <- X - eta Lambda_1(X)`.
    FirstOrder,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Sol => "sol",
            Variant::SolSym => "sol-sym",
            Variant::RiemannianNewton => "riemannian-newton",
            Variant::FirstOrder => "first-order",
        }
    }

    pub fn is_second_order(self) -> bool {
        !matches!(self, Variant::FirstOrder)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sol" => Ok(Variant::Sol),
            "sol-sym" | "sol_sym" => Ok(Variant::SolSym),
            "riemannian-newton" | "rn" => Ok(Variant::RiemannianNewton),
            "first-order" | "first_order" => Ok(Variant::FirstOrder),
            other => Err(invalid("variant", format!("unknown variant `{other}`"))),
        }
    }
}

/// Which optimality measure ends the outer loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingRule {
    /// `||grad f||_F + ||X^T X - I||_F`.
    #[default]
    Feasibility,
    /// `||grad f||_F + ||N_1(X)||_F`.
    NormalUpdate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub variant: Variant,
    /// Safe-region radius.
    pub eps: f64,
    /// Weight of `grad N` in the first-order field.
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub zeta_max: f64,
    pub theta: f64,
    /// Fixed first-order step, clipped by the safe step.
    pub first_order_step: f64,
    /// Inner Krylov budget; `None` uses [`krylov::default_max_iter`].
    pub inner_max_iter: Option<usize>,
    pub stopping_rule: StoppingRule,
    /// Keep every accepted iterate in [`SolveResult::iterates`].
    pub record_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Sol,
            eps: 0.5,
            lambda: 0.5,
            tol: 1e-12,
            max_iter: 200,
            zeta_max: 0.1,
            theta: 1.0,
            first_order_step: 0.1,
            inner_max_iter: None,
            stopping_rule: StoppingRule::Feasibility,
            record_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(invalid("eps", format!("must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be positive, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        if !(self.first_order_step > 0.0 && self.first_order_step.is_finite()) {
            return Err(invalid(
                "first_order_step",
                format!("must be positive, got {}", self.first_order_step),
            ));
        }
        if self.inner_max_iter == Some(0) {
            return Err(invalid("inner_max_iter", "must be at least 1"));
        }
        krylov::forcing_tolerance(1.0, self.zeta_max, self.theta)?;
        Ok(())
    }

    fn inner_budget(&self, n: usize, p: usize) -> usize {
        self.inner_max_iter
            .unwrap_or_else(|| krylov::default_max_iter(n, p))
    }
}

/// One row of the iteration history. Row 0 is the initial state; row `k`
/// describes `X_k` together with the step that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterTrace {
    pub iter: usize,
    pub f_value: f64,
    pub grad_norm: f64,
    pub feas: f64,
    pub step_size: f64,
    pub inner_iters: usize,
    pub inner_residual: f64,
    /// Seconds since the start of the run, measured after the iteration.
    pub wall_time_s: f64,
    /// Norm of the tangent right-hand side in the inner solver's norm.
    pub rhs_norm: f64,
    /// Inner tolerance requested by the forcing rule.
    pub inner_tol: f64,
    /// The inner solve failed and a first-order step was taken instead.
    pub inner_failure: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Converged,
    MaxIter,
    InnerFailure,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "CONVERGED",
            Status::MaxIter => "MAX_ITER",
            Status::InnerFailure => "INNER_FAILURE",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub point: AmbientPoint,
    pub traces: Vec<IterTrace>,
    pub status: Status,
    /// `X_0, X_1, ...` when [`SolverConfig::record_iterates`] is set.
    pub iterates: Vec<Mat>,
}

impl SolveResult {
    pub fn iterations(&self) -> usize {
        self.traces.len() - 1
    }

    pub fn inner_failures(&self) -> usize {
        self.traces.iter().filter(|t| t.inner_failure).count()
    }

    pub fn final_trace(&self) -> &IterTrace {
        self.traces.last().expect("trace has an initial row")
    }
}

/// Largest step `eta <= 1` keeping `X + eta Lambda` in the safe region for a
/// landing direction `Lambda = T + N_1(X)` with `T` tangent.
pub fn safe_step_size(x: &AmbientPoint, lambda_dir: &Mat, eps: f64) -> Result<f64> {
    safe_step_weighted(x, lambda_dir, eps, 0.5)
}

/// Safe step for a direction whose normal part is `-w grad N(X)`:
/// `min{(w d(1-d) + sqrt(w^2 d^2 (1-d)^2 + g^2 (eps-d))) / g^2, 1/(2w)}`.
/// For `w = 1/2` this is the rule used by the second-order method.
pub fn safe_step_weighted(x: &AmbientPoint, dir: &Mat, eps: f64, w: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("eps", format!("must lie in (0, 1), got {eps}")));
    }
    x.check_shape(dir)?;
    let d = x.feasibility();
    if d > eps {
        return Err(Error::NotInSafeRegion { feas: d, eps });
    }
    let cap = 1.0 / (2.0 * w);
    let g2 = dir.norm_squared();
    if g2 == 0.0 {
        return Ok(cap);
    }
    let a = w * d * (1.0 - d);
    let eta = (a + (a * a + g2 * (eps - d)).sqrt()) / g2;
    Ok(eta.min(cap))
}

/// `||grad f(X)||_F + ||X^T X - I||_F`.
pub fn stopping_metric<P: Problem + ?Sized>(prob: &P, x: &AmbientPoint) -> Result<f64> {
    let ctx = FieldContext::new(prob, x)?;
    Ok(ctx.riemannian_gradient_norm() + x.feasibility())
}

/// `||grad f(X)||_F + ||N_1(X)||_F`.
pub fn stopping_metric_normal<P: Problem + ?Sized>(prob: &P, x: &AmbientPoint) -> Result<f64> {
    let ctx = FieldContext::new(prob, x)?;
    Ok(ctx.riemannian_gradient_norm() + ctx.normal_component().norm())
}

fn metric_of<P: Problem + ?Sized>(ctx: &FieldContext<'_, P>, rule: StoppingRule) -> f64 {
    let normal = match rule {
        StoppingRule::Feasibility => ctx.point().feasibility(),
        StoppingRule::NormalUpdate => ctx.normal_component().norm(),
    };
    ctx.riemannian_gradient_norm() + normal
}

/// Moves along `dir` by `min(max_step, eta_safe)`, shrinking by a few ulps
/// if roundoff pushes the new point just outside the safe region.
pub fn safe_move(x: &AmbientPoint, dir: &Mat, eps: f64, w: f64, max_step: f64) -> Result<(AmbientPoint, f64)> {
    let mut eta = safe_step_weighted(x, dir, eps, w)?.min(max_step);
    for _ in 0..64 {
        let next = x.step(dir, eta)?;
        if next.feasibility() <= eps {
            return Ok((next, eta));
        }
        eta *= 1.0 - 1e-10;
    }
    Err(Error::NotInSafeRegion {
        feas: x.step(dir, eta)?.feasibility(),
        eps,
    })
}

/// Second-order move: the unit step when `X + Lambda` stays in the safe
/// region, otherwise exactly the safe step.
pub fn landing_move(x: &AmbientPoint, dir: &Mat, eps: f64) -> Result<(AmbientPoint, f64)> {
    if let Ok(trial) = x.step(dir, 1.0) {
        if trial.feasibility() <= eps {
            return Ok((trial, 1.0));
        }
    }
    safe_move(x, dir, eps, 0.5, 1.0)
}

/// Result of a single outer iteration.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub point: AmbientPoint,
    pub step_size: f64,
    /// `None` for first-order steps.
    pub inner: Option<SolveReport>,
    pub rhs_norm: f64,
    pub inner_tol: f64,
    pub inner_failure: bool,
}

/// Tangent component of the second-order field and the inner solve report.
pub fn tangent_component<P: Problem + ?Sized>(
    ctx: &FieldContext<'_, P>,
    cfg: &SolverConfig,
) -> Result<(TangentVector, SolveReport, f64, f64)> {
    let x = ctx.point();
    let (n, p) = x.shape();
    let budget = cfg.inner_budget(n, p);
    match cfg.variant {
        Variant::Sol => {
            // The right-hand side cancels O(||grad f||) terms; projecting removes
            // the roundoff that would otherwise leave the tangent space.
            let b = x.project_tangent(ctx.newton_rhs().matrix());
            let b_norm = b.norm();
            let tol = inner_tolerance(ctx, b_norm, cfg)?;
            if tol == 0.0 {
                return Ok((TangentVector::zeros(n, p), zero_report(), 0.0, 0.0));
            }
            let op = LinearMap::new(x, |v: &Mat| ctx.apply_at_raw(v));
            let (t, rep) = krylov::solve_nonsymmetric(&op, &b, tol, budget)?;
            Ok((t, rep, b_norm, tol))
        }
        Variant::SolSym | Variant::RiemannianNewton => {
            let b = if cfg.variant == Variant::SolSym {
                x.project_tangent(ctx.newton_rhs().matrix())
            } else {
                x.project_tangent(&-ctx.riemannian_gradient().into_matrix())
            };
            let b_norm = x.metric_norm(b.matrix());
            let tol = inner_tolerance(ctx, b_norm, cfg)?;
            if tol == 0.0 {
                return Ok((TangentVector::zeros(n, p), zero_report(), 0.0, 0.0));
            }
            let op = LinearMap::new(x, |v: &Mat| ctx.apply_hessian_raw(v));
            let (t, rep) = krylov::solve_g_symmetric(&op, &b, tol, budget)?;
            Ok((t, rep, b_norm, tol))
        }
        Variant::FirstOrder => Err(invalid("variant", "first-order has no tangent system")),
    }
}

/// Forcing tolerance, raised to the roundoff floor of the right-hand side so
/// that near the solution the inner solve is not asked for digits it cannot
/// resolve.
fn inner_tolerance<P: Problem + ?Sized>(ctx: &FieldContext<'_, P>, b_norm: f64, cfg: &SolverConfig) -> Result<f64> {
    let forcing = krylov::forcing_tolerance(b_norm, cfg.zeta_max, cfg.theta)?;
    if b_norm == 0.0 {
        return Ok(0.0);
    }
    Ok(forcing.max(krylov::roundoff_floor(ctx.euclid_grad().norm())))
}

fn zero_report() -> SolveReport {
    SolveReport {
        iterations: 0,
        residual_norm: 0.0,
        converged: true,
        breakdown: None,
        restarts: 0,
    }
}

fn first_order_step<P: Problem + ?Sized>(ctx: &FieldContext<'_, P>, cfg: &SolverConfig) -> Result<StepOutcome> {
    let dir = -ctx.first_order_landing_field(cfg.lambda);
    let (point, step_size) = safe_move(ctx.point(), &dir, cfg.eps, cfg.lambda, cfg.first_order_step)?;
    Ok(StepOutcome {
        point,
        step_size,
        inner: None,
        rhs_norm: 0.0,
        inner_tol: 0.0,
        inner_failure: false,
    })
}

fn step_with_context<P: Problem + ?Sized>(ctx: &FieldContext<'_, P>, cfg: &SolverConfig) -> Result<StepOutcome> {
    let x = ctx.point();
    if x.feasibility() > cfg.eps {
        return Err(Error::NotInSafeRegion {
            feas: x.feasibility(),
            eps: cfg.eps,
        });
    }
    if cfg.variant == Variant::FirstOrder {
        return first_order_step(ctx, cfg);
    }
    let (t, rep, rhs_norm, inner_tol) = tangent_component(ctx, cfg)?;
    if !rep.converged {
        let mut out = first_order_step(ctx, cfg)?;
        out.inner = Some(rep);
        out.rhs_norm = rhs_norm;
        out.inner_tol = inner_tol;
        out.inner_failure = true;
        return Ok(out);
    }
    let dir = t.into_matrix() + ctx.normal_component().into_matrix();
    let (point, step_size) = landing_move(x, &dir, cfg.eps)?;
    Ok(StepOutcome {
        point,
        step_size,
        inner: Some(rep),
        rhs_norm,
        inner_tol,
        inner_failure: false,
    })
}

/// One outer iteration of the configured variant from `x`.
pub fn sol_step<P: Problem + ?Sized>(prob: &P, x: &AmbientPoint, cfg: &SolverConfig) -> Result<StepOutcome> {
    cfg.validate()?;
    let ctx = FieldContext::new(prob, x)?;
    step_with_context(&ctx, cfg)
}

/// Runs the configured variant from `x0` until the stopping metric is at
/// most `cfg.tol` or `cfg.max_iter` iterations have been taken.
pub fn solve<P: Problem + ?Sized>(prob: &P, x0: &AmbientPoint, cfg: &SolverConfig) -> Result<SolveResult> {
    let rule = cfg.stopping_rule;
    let tol = cfg.tol;
    let mut res = run(prob, x0, cfg, |ctx| metric_of(ctx, rule) <= tol)?;
    if !cfg.record_iterates {
        res.iterates.clear();
    }
    Ok(res)
}

/// First-order landing iteration `X <- X - eta Lambda_1(X)` with
/// `eta = min(first_order_step, eta_safe)`, stopped once
/// `||grad f(X)||_F <= target_grad_norm`. On `MaxIter` the returned point is
/// the iterate with the smallest Riemannian gradient.
pub fn first_order_landing_solve<P: Problem + ?Sized>(
    prob: &P,
    x0: &AmbientPoint,
    cfg: &SolverConfig,
    target_grad_norm: f64,
) -> Result<SolveResult> {
    if !(target_grad_norm > 0.0) {
        return Err(invalid("target_grad_norm", "must be positive"));
    }
    let cfg = SolverConfig {
        variant: Variant::FirstOrder,
        ..cfg.clone()
    };
    let mut res = run(prob, x0, &cfg, |ctx| ctx.riemannian_gradient_norm() <= target_grad_norm)?;
    if res.status != Status::Converged {
        let best = res
            .traces
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.grad_norm.total_cmp(&b.1.grad_norm))
            .map(|(k, _)| k)
            .unwrap_or(0);
        if best + 1 != res.traces.len() {
            if let Some(m) = res.iterates.get(best) {
                res.point = AmbientPoint::new(m.clone())?;
            }
        }
    }
    if !cfg.record_iterates {
        res.iterates.clear();
    }
    Ok(res)
}

fn run<P, F>(prob: &P, x0: &AmbientPoint, cfg: &SolverConfig, done: F) -> Result<SolveResult>
where
    P: Problem + ?Sized,
    F: Fn(&FieldContext<'_, P>) -> bool,
{
    cfg.validate()?;
    if x0.feasibility() > cfg.eps {
        return Err(Error::NotInSafeRegion {
            feas: x0.feasibility(),
            eps: cfg.eps,
        });
    }
    let start = Instant::now();
    let keep_all = cfg.record_iterates || cfg.variant == Variant::FirstOrder;
    let mut point = x0.clone();
    let mut iterates = Vec::new();
    if keep_all {
        iterates.push(point.matrix().clone());
    }
    let mut traces = Vec::with_capacity(cfg.max_iter.min(10_000) + 1);
    let mut any_failure = false;

    let mut ctx_point = point.clone();
    let mut pending: Option<StepOutcome> = None;
    loop {
        let ctx = FieldContext::new(prob, &ctx_point)?;
        let k = traces.len();
        let row = IterTrace {
            iter: k,
            f_value: prob.value(ctx_point.matrix()),
            grad_norm: ctx.riemannian_gradient_norm(),
            feas: ctx_point.feasibility(),
            step_size: pending.as_ref().map_or(0.0, |s| s.step_size),
            inner_iters: pending
                .as_ref()
                .and_then(|s| s.inner.map(|r| r.iterations))
                .unwrap_or(0),
            inner_residual: pending
                .as_ref()
                .and_then(|s| s.inner.map(|r| r.residual_norm))
                .unwrap_or(0.0),
            wall_time_s: start.elapsed().as_secs_f64(),
            rhs_norm: pending.as_ref().map_or(0.0, |s| s.rhs_norm),
            inner_tol: pending.as_ref().map_or(0.0, |s| s.inner_tol),
            inner_failure: pending.as_ref().is_some_and(|s| s.inner_failure),
        };
        traces.push(row);
        point = ctx_point.clone();

        if done(&ctx) {
            return Ok(SolveResult {
                point,
                traces,
                status: Status::Converged,
                iterates,
            });
        }
        if k >= cfg.max_iter {
            break;
        }
        let outcome = step_with_context(&ctx, cfg)?;
        any_failure |= outcome.inner_failure;
        ctx_point = outcome.point.clone();
        if keep_all {
            iterates.push(ctx_point.matrix().clone());
        }
        pending = Some(outcome);
    }

    let status = if any_failure {
        Status::InnerFailure
    } else {
        Status::MaxIter
    };
    Ok(SolveResult {
        point,
        traces,
        status,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian, haar_stiefel, identity, sym};
    use crate::newton_schulz::{ns_update, NsOrder};
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// f(X) = 1/2 ||X - C||^2 restricted to St(p, n): the minimizer is the
    /// polar factor of C.
    struct Nearest {
        c: Mat,
    }

    impl Problem for Nearest {
        fn dims(&self) -> (usize, usize) {
            self.c.shape()
        }
        fn value(&self, x: &Mat) -> f64 {
            0.5 * (x - &self.c).norm_squared()
        }
        fn euclid_grad(&self, x: &Mat) -> Mat {
            x - &self.c
        }
        fn hvp(&self, _x: &Mat, v: &Mat) -> Mat {
            v.clone()
        }
    }

    fn point_with_feas(rng: &mut ChaCha8Rng, n: usize, p: usize, feas: f64) -> AmbientPoint {
        let q = haar_stiefel(rng, n, p);
        let s = sym(&gaussian(rng, p, p));
        let s = &s * (feas / s.norm());
        let eig = s.symmetric_eigen();
        let root = eig.eigenvalues.map(|l| (1.0 + l).sqrt());
        let half = &eig.eigenvectors * Mat::from_diagonal(&root) * eig.eigenvectors.transpose();
        AmbientPoint::new(q * half).unwrap()
    }

    #[test]
    fn safe_step_examples() {
        let x = AmbientPoint::new(dmatrix![1.0; 0.0]).unwrap();
        let dir = dmatrix![0.0; 1.0];
        assert!((safe_step_size(&x, &dir, 0.25).unwrap() - 0.5).abs() < 1e-15);
        let small = dmatrix![0.0; 0.4];
        assert_eq!(safe_step_size(&x, &small, 0.25).unwrap(), 1.0);
        assert_eq!(safe_step_size(&x, &Mat::zeros(2, 1), 0.25).unwrap(), 1.0);
        let far = AmbientPoint::new(dmatrix![1.2; 0.0]).unwrap();
        assert!(matches!(
            safe_step_size(&far, &dir, 0.4),
            Err(Error::NotInSafeRegion { .. })
        ));
    }

    #[test]
    fn safe_step_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let n = rng.random_range(2..9);
            let p = rng.random_range(1..=n.min(4));
            let eps: f64 = rng.random_range(0.05..0.95);
            let d = rng.random_range(0.0..eps);
            let x = point_with_feas(&mut rng, n, p, d);
            let scale = 10f64.powf(rng.random_range(-2.0..1.5));
            let t = x.project_tangent(&gaussian(&mut rng, n, p)).into_matrix() * scale;
            let dir = t + ns_update(&x, NsOrder::ONE).into_matrix();
            let eta = safe_step_size(&x, &dir, eps).unwrap();
            assert!(eta > 0.0 && eta <= 1.0);
            let next = x.step(&dir, eta).unwrap();
            assert!(next.feasibility() <= eps + 1e-12, "{} > {eps}", next.feasibility());
        }
    }

    #[test]
    fn weighted_safe_step_keeps_first_order_iterates_safe() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let (n, p) = (6, 3);
            let lambda = rng.random_range(0.1..2.0);
            let eps: f64 = rng.random_range(0.05..0.95);
            let d = rng.random_range(0.0..eps);
            let x = point_with_feas(&mut rng, n, p, d);
            let t = x.project_tangent(&gaussian(&mut rng, n, p)).into_matrix() * rng.random_range(0.01..5.0);
            let dir = -(t + x.infeasibility_gradient().into_matrix() * lambda);
            let eta = safe_step_weighted(&x, &dir, eps, lambda).unwrap();
            assert!(eta <= 1.0 / (2.0 * lambda));
            let next = x.step(&dir, eta).unwrap();
            assert!(next.feasibility() <= eps + 1e-12);
        }
    }

    #[test]
    fn normal_only_step_squares_infeasibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d = rng.random_range(0.01..0.5);
            let x = point_with_feas(&mut rng, 8, 3, d);
            let dir = ns_update(&x, NsOrder::ONE).into_matrix();
            let (next, eta) = landing_move(&x, &dir, 0.5).unwrap();
            assert_eq!(eta, 1.0);
            assert!(next.feasibility() <= x.feasibility().powi(2) + 1e-15);
        }
    }

    #[test]
    fn fixed_point_and_zero_iteration_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = haar_stiefel(&mut rng, 7, 3);
        let prob = Nearest { c: q.clone() * 2.0 };
        let x = AmbientPoint::new(q).unwrap();
        for variant in [Variant::Sol, Variant::SolSym, Variant::FirstOrder] {
            let cfg = SolverConfig::with_variant(variant);
            let step = sol_step(&prob, &x, &cfg).unwrap();
            assert!((step.point.matrix() - x.matrix()).norm() < 1e-14);
            let res = solve(&prob, &x, &cfg).unwrap();
            assert_eq!(res.status, Status::Converged);
            assert_eq!(res.iterations(), 0);
            assert_eq!(res.traces.len(), 1);
        }
        let res = first_order_landing_solve(&prob, &x, &SolverConfig::default(), 1e-2).unwrap();
        assert_eq!(res.iterations(), 0);
        assert!(stopping_metric(&prob, &x).unwrap() <= 1e-14);
    }

    #[test]
    fn stopping_metric_on_manifold_is_gradient_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let prob = Nearest { c: gaussian(&mut rng, 6, 2) };
        let x = AmbientPoint::new(haar_stiefel(&mut rng, 6, 2)).unwrap();
        let g = FieldContext::new(&prob, &x).unwrap().riemannian_gradient_norm();
        assert!((stopping_metric(&prob, &x).unwrap() - g).abs() <= 1e-15 * g.max(1.0) + x.feasibility());
        assert!(g > 0.0);
    }

    #[test]
    fn second_order_variants_converge_to_polar_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (n, p) = (9, 3);
        let c = haar_stiefel(&mut rng, n, p) * 1.5 + gaussian(&mut rng, n, p) * 0.1;
        let svd = c.clone().svd(true, true);
        let polar = svd.u.unwrap() * svd.v_t.unwrap();
        let prob = Nearest { c };
        let x0 = point_with_feas(&mut rng, n, p, 0.2);
        let x0 = AmbientPoint::new(&polar * 0.9 + x0.matrix() * 0.1).unwrap();
        for variant in [Variant::Sol, Variant::SolSym] {
            let cfg = SolverConfig::with_variant(variant);
            let res = solve(&prob, &x0, &cfg).unwrap();
            assert_eq!(res.status, Status::Converged, "{variant:?}");
            assert!(res.iterations() <= 15);
            assert!((res.point.matrix() - &polar).norm() < 1e-10);
            for row in &res.traces {
                assert!(row.feas <= cfg.eps);
                if row.iter > 0 && !row.inner_failure {
                    assert!(row.inner_residual <= row.inner_tol);
                }
            }
            let last = res.final_trace();
            assert!(last.grad_norm + last.feas <= cfg.tol);
        }
    }

    #[test]
    fn first_order_reaches_target_and_reports_max_iter() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let prob = Nearest { c: gaussian(&mut rng, 8, 2) };
        let x0 = AmbientPoint::new(haar_stiefel(&mut rng, 8, 2)).unwrap();
        let cfg = SolverConfig {
            max_iter: 5000,
            ..SolverConfig::default()
        };
        let res = first_order_landing_solve(&prob, &x0, &cfg, 1e-3).unwrap();
        assert_eq!(res.status, Status::Converged);
        assert!(res.final_trace().grad_norm <= 1e-3);
        let short = SolverConfig {
            max_iter: 3,
            ..SolverConfig::default()
        };
        let res = first_order_landing_solve(&prob, &x0, &short, 1e-12).unwrap();
        assert_eq!(res.status, Status::MaxIter);
        assert_eq!(res.traces.len(), 4);
        let best = res.traces.iter().map(|t| t.grad_norm).fold(f64::INFINITY, f64::min);
        let g = FieldContext::new(&prob, &res.point).unwrap().riemannian_gradient_norm();
        assert_eq!(g, best);
    }

    #[test]
    fn rejects_start_outside_safe_region_and_bad_config() {
        let prob = Nearest { c: identity(2) };
        let x = AmbientPoint::new(identity(2) * 1.5).unwrap();
        assert!(matches!(
            solve(&prob, &x, &SolverConfig::default()),
            Err(Error::NotInSafeRegion { .. })
        ));
        let ok = AmbientPoint::new(identity(2)).unwrap();
        let bad = SolverConfig {
            eps: 1.5,
            ..SolverConfig::default()
        };
        assert!(matches!(solve(&prob, &ok, &bad), Err(Error::InvalidParameter { name: "eps", .. })));
        let bad = SolverConfig {
            theta: 0.0,
            ..SolverConfig::default()
        };
        assert!(solve(&prob, &ok, &bad).is_err());
    }

    #[test]
    fn inner_failure_falls_back_to_first_order_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let prob = Nearest { c: gaussian(&mut rng, 8, 3) };
        let x0 = AmbientPoint::new(haar_stiefel(&mut rng, 8, 3)).unwrap();
        let cfg = SolverConfig {
            inner_max_iter: Some(1),
            max_iter: 3,
            ..SolverConfig::default()
        };
        let res = solve(&prob, &x0, &cfg).unwrap();
        assert_eq!(res.status, Status::InnerFailure);
        assert!(res.traces.iter().skip(1).any(|t| t.inner_failure));
        for t in &res.traces {
            assert!(t.feas <= cfg.eps);
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [Variant::Sol, Variant::SolSym, Variant::RiemannianNewton, Variant::FirstOrder] {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("newton".parse::<Variant>().is_err());
    }
}
