//! Matrix-free Krylov solvers on the tangent space of the layered manifold.
//!
//! [`solve_nonsymmetric`] is BiCGSTAB with Frobenius inner products and is
//! used for the approximate Newton equation `A_T[T] = b`.
//! [`solve_g_symmetric`] is MINRES in which every inner product is the metric
//! `g` at the base point, so it applies to operators that are self-adjoint
//! under `g` (the Riemannian Hessian) and minimizes the `g`-norm residual.
//!
//! Both start from a zero initial guess and only combine tangent vectors with
//! operator outputs, so iterates stay tangent without re-projection.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::geometry::{AmbientPoint, TangentVector};
use crate::linalg::{inner, Mat};

/// Largest inner iteration budget regardless of the tangent dimension.
pub const MAX_ITER_CAP: usize = 500;

/// Threshold on `|g(v_{k+1}, v_1)|` beyond which the Lanczos basis is
/// considered to have lost orthogonality.
pub const ORTHOGONALITY_TOL: f64 = 1e-6;

/// Relative threshold for the BiCGSTAB scalars `rho` and `omega`.
const BREAKDOWN_TOL: f64 = 1e-15;

/// Linear map from the tangent space at [`TangentOperator::base`] to itself.
pub trait TangentOperator: Sync {
    fn base(&self) -> &AmbientPoint;

    /// Applies the operator to a tangent matrix.
    fn apply(&self, v: &Mat) -> Mat;
}

/// [`TangentOperator`] backed by a closure.
pub struct LinearMap<'a, F> {
    base: &'a AmbientPoint,
    f: F,
}

impl<'a, F> LinearMap<'a, F>
where
    F: Fn(&Mat) -> Mat + Sync,
{
    pub fn new(base: &'a AmbientPoint, f: F) -> Self {
        Self { base, f }
    }
}

impl<F> TangentOperator for LinearMap<'_, F>
where
    F: Fn(&Mat) -> Mat + Sync,
{
    fn base(&self) -> &AmbientPoint {
        self.base
    }

    fn apply(&self, v: &Mat) -> Mat {
        (self.f)(v)
    }
}

/// Why a solve stopped before meeting its tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Breakdown {
    /// BiCGSTAB: `<r_hat, r>` or `<r_hat, A p>` vanished.
    Rho,
    /// BiCGSTAB: the stabilization coefficient vanished.
    Omega,
    /// MINRES: the Lanczos basis lost `g`-orthogonality again after a restart.
    Orthogonality,
    /// The iteration budget was exhausted.
    MaxIter,
}

impl fmt::Display for Breakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Breakdown::Rho => "rho breakdown",
            Breakdown::Omega => "omega breakdown",
            Breakdown::Orthogonality => "loss of g-orthogonality",
            Breakdown::MaxIter => "iteration limit reached",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct SolveReport {
    /// Operator applications spent on Krylov steps (residual checks excluded).
    pub iterations: usize,
    /// Final residual in the solver's native norm.
    pub residual_norm: f64,
    pub converged: bool,
    pub breakdown: Option<Breakdown>,
    /// Number of restarts from the true residual.
    pub restarts: usize,
}

impl SolveReport {
    fn trivial() -> Self {
        Self {
            iterations: 0,
            residual_norm: 0.0,
            converged: true,
            breakdown: None,
            restarts: 0,
        }
    }
}

/// Inexact-Newton forcing tolerance `min(zeta_max, ||b||^theta) ||b||`.
pub fn forcing_tolerance(b_norm: f64, zeta_max: f64, theta: f64) -> Result<f64> {
    if !(b_norm >= 0.0) {
        return Err(invalid("b_norm", format!("must be nonnegative, got {b_norm}")));
    }
    if !(zeta_max > 0.0 && zeta_max < 1.0) {
        return Err(invalid("zeta_max", format!("must lie in (0, 1), got {zeta_max}")));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid("theta", format!("must be positive, got {theta}")));
    }
    Ok(zeta_max.min(b_norm.powf(theta)) * b_norm)
}

/// Residual level below which a tangent right-hand side built from a gradient
/// of norm `grad_norm` carries no information: the skew products that form it
/// cancel O(`grad_norm`) terms, so its absolute error is a few ulps of that.
pub fn roundoff_floor(grad_norm: f64) -> f64 {
    16.0 * f64::EPSILON * grad_norm
}

/// Dimension `np - p(p+1)/2` of the tangent space at a full-rank `n x p` point.
pub fn tangent_dimension(n: usize, p: usize) -> usize {
    n * p - p * (p + 1) / 2
}

/// Default inner budget: ten times the tangent dimension, capped at 500.
pub fn default_max_iter(n: usize, p: usize) -> usize {
    (10 * tangent_dimension(n, p)).clamp(1, MAX_ITER_CAP)
}

fn check_inputs(op: &dyn TangentOperator, b: &TangentVector, tol: f64) -> Result<()> {
    op.base().check_shape(b.matrix())?;
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    Ok(())
}

/// BiCGSTAB for `op[T] = b` with Frobenius-norm residuals.
///
/// On exit with `converged = true` the reported residual is the true residual
/// `||b - op[T]||_F`, recomputed explicitly.
pub fn solve_nonsymmetric(
    op: &dyn TangentOperator,
    b: &TangentVector,
    tol: f64,
    max_iter: usize,
) -> Result<(TangentVector, SolveReport)> {
    check_inputs(op, b, tol)?;
    let b = b.matrix();
    let (n, p) = b.shape();
    let mut x = Mat::zeros(n, p);
    let mut report = SolveReport::trivial();
    let mut r = b.clone();
    let mut r_norm = r.norm();
    report.residual_norm = r_norm;
    if r_norm <= tol {
        return Ok((TangentVector(x), report));
    }

    // One restart from the true residual is allowed when the recursive
    // residual drifts or the shadow residual becomes orthogonal.
    'outer: loop {
        let r_hat = r.clone();
        let mut rho = 1.0;
        let mut alpha = 1.0;
        let mut omega = 1.0;
        let mut v = Mat::zeros(n, p);
        let mut dir = Mat::zeros(n, p);

        while report.iterations < max_iter {
            report.iterations += 1;
            let rho_new = inner(&r_hat, &r);
            if rho_new.abs() <= BREAKDOWN_TOL * r_hat.norm() * r_norm {
                report.breakdown = Some(Breakdown::Rho);
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            dir = &r + (&dir - &v * omega) * beta;
            v = op.apply(&dir);
            let denom = inner(&r_hat, &v);
            if denom.abs() <= BREAKDOWN_TOL * r_hat.norm() * v.norm() {
                report.breakdown = Some(Breakdown::Rho);
                break;
            }
            alpha = rho_new / denom;
            let s = &r - &v * alpha;
            if s.norm() <= tol {
                x += &dir * alpha;
                r = b - op.apply(&x);
                r_norm = r.norm();
                if r_norm <= tol {
                    break 'outer;
                }
                continue 'outer;
            }
            let t = op.apply(&s);
            let tt = t.norm_squared();
            if tt == 0.0 {
                report.breakdown = Some(Breakdown::Omega);
                break;
            }
            omega = inner(&t, &s) / tt;
            x += &dir * alpha + &s * omega;
            r = &s - &t * omega;
            r_norm = r.norm();
            if r_norm <= tol {
                r = b - op.apply(&x);
                r_norm = r.norm();
                if r_norm <= tol {
                    break 'outer;
                }
                if report.restarts >= 1 {
                    break;
                }
                report.restarts += 1;
                continue 'outer;
            }
            if omega.abs() <= BREAKDOWN_TOL {
                report.breakdown = Some(Breakdown::Omega);
                break;
            }
            rho = rho_new;
        }

        // Stopped without convergence: report the true residual.
        r = b - op.apply(&x);
        r_norm = r.norm();
        if r_norm <= tol {
            report.breakdown = None;
            break 'outer;
        }
        if report.breakdown.is_some() && report.restarts == 0 && report.iterations < max_iter {
            report.restarts += 1;
            report.breakdown = None;
            continue 'outer;
        }
        report.breakdown.get_or_insert(Breakdown::MaxIter);
        report.residual_norm = r_norm;
        report.converged = false;
        return Ok((TangentVector(x), report));
    }

    report.residual_norm = r_norm;
    report.converged = true;
    Ok((TangentVector(x), report))
}

/// MINRES for `op[T] = b` with every inner product taken in the metric `g` at
/// the base point; the residual is measured in the `g`-norm.
///
/// The Lanczos basis is monitored against its first vector. If orthogonality
/// is lost beyond [`ORTHOGONALITY_TOL`] the solve restarts once from the true
/// residual; a second loss is reported as a breakdown.
pub fn solve_g_symmetric(
    op: &dyn TangentOperator,
    b: &TangentVector,
    tol: f64,
    max_iter: usize,
) -> Result<(TangentVector, SolveReport)> {
    check_inputs(op, b, tol)?;
    let base = op.base();
    let b = b.matrix();
    let (n, p) = b.shape();
    let mut x = Mat::zeros(n, p);
    let mut report = SolveReport::trivial();
    let mut r = b.clone();
    let mut r_norm = base.metric_norm(&r);
    report.residual_norm = r_norm;
    if r_norm <= tol {
        return Ok((TangentVector(x), report));
    }

    loop {
        let outcome = minres_cycle(op, &r, r_norm, tol, max_iter - report.iterations, &mut report)?;
        x += outcome.dx;
        r = b - op.apply(&x);
        r_norm = base.metric_norm(&r);
        if r_norm <= tol {
            report.residual_norm = r_norm;
            report.converged = true;
            report.breakdown = None;
            return Ok((TangentVector(x), report));
        }
        let can_restart = report.restarts == 0 && report.iterations < max_iter;
        match outcome.stop {
            CycleStop::LostOrthogonality | CycleStop::Converged if can_restart => {
                report.restarts += 1;
            }
            CycleStop::LostOrthogonality => {
                report.breakdown = Some(Breakdown::Orthogonality);
                break;
            }
            _ => {
                report.breakdown = Some(Breakdown::MaxIter);
                break;
            }
        }
    }
    report.residual_norm = r_norm;
    report.converged = false;
    Ok((TangentVector(x), report))
}

enum CycleStop {
    Converged,
    LostOrthogonality,
    Exhausted,
}

struct Cycle {
    dx: Mat,
    stop: CycleStop,
}

/// One MINRES run from a zero guess on `op[dx] = r`.
fn minres_cycle(
    op: &dyn TangentOperator,
    r: &Mat,
    beta1: f64,
    tol: f64,
    budget: usize,
    report: &mut SolveReport,
) -> Result<Cycle> {
    let base = op.base();
    let (n, p) = r.shape();
    let mut dx = Mat::zeros(n, p);
    let v1 = r / beta1;
    let mut v_prev = Mat::zeros(n, p);
    let mut v = v1.clone();
    let mut beta = beta1;
    let mut w_prev = Mat::zeros(n, p);
    let mut w = Mat::zeros(n, p);
    let (mut cs, mut sn) = (-1.0_f64, 0.0_f64);
    let (mut dbar, mut epsln) = (0.0_f64, 0.0_f64);
    let mut phibar = beta1;

    for k in 0..budget {
        report.iterations += 1;
        let av = op.apply(&v);
        if cfg!(debug_assertions) && k == 1 {
            // g(A v_2, v_1) must equal beta_2 = g(A v_1, v_2) for a g-self-adjoint operator.
            let lhs = base.metric_inner(&av, &v_prev);
            if (lhs - beta).abs() > 1e-6 * base.metric_norm(&av).max(beta) {
                return Err(Error::ContractViolation(format!(
                    "operator is not g-self-adjoint: g(Av2, v1) = {lhs:e} vs {beta:e}"
                )));
            }
        }
        let alpha = base.metric_inner(&v, &av);
        let mut u = av - &v * alpha - &v_prev * beta;
        let beta_new = base.metric_norm(&u);

        let old_eps = epsln;
        let delta = cs * dbar + sn * alpha;
        let gbar = sn * dbar - cs * alpha;
        epsln = sn * beta_new;
        dbar = -cs * beta_new;
        let gamma = gbar.hypot(beta_new).max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta_new / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let w_new = (&v - &w_prev * old_eps - &w * delta) / gamma;
        dx += &w_new * phi;
        w_prev = std::mem::replace(&mut w, w_new);

        report.residual_norm = phibar;
        if phibar <= tol || beta_new == 0.0 {
            return Ok(Cycle {
                dx,
                stop: CycleStop::Converged,
            });
        }
        u /= beta_new;
        if base.metric_inner(&u, &v1).abs() > ORTHOGONALITY_TOL {
            return Ok(Cycle {
                dx,
                stop: CycleStop::LostOrthogonality,
            });
        }
        v_prev = std::mem::replace(&mut v, u);
        beta = beta_new;
    }
    Ok(Cycle {
        dx,
        stop: CycleStop::Exhausted,
    })
}
