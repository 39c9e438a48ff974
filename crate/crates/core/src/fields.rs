//! First- and second-order landing fields and the linear operators that
//! appear in the tangent Newton systems.
//!
//! The objective enters only through [`Problem`]: value, Euclidean gradient
//! and Hessian-vector products. All operators are matrix-free and avoid
//! forming `n x n` matrices by evaluating `2 skew(A B^T) C` as
//! `A (B^T C) - B (A^T C)`.
//!
//! A [`FieldContext`] caches everything that depends only on the base point
//! (`grad f(X)`, the Riemannian gradient `G(X)`, the Cholesky factor of the
//! Gram matrix) so that repeated operator applications inside a Krylov solve
//! only pay for the Hessian-vector product and a few `n x p` products.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{invalid, Error, Result};
use crate::geometry::{AmbientPoint, NormalVector, TangentVector};
use crate::linalg::{skew_apply, sym, Mat};

/// Residual above which an operator input is rejected as non-tangent or
/// non-normal. Checked in debug builds only.
pub const CONTRACT_TOL: f64 = 1e-8;

/// Smooth objective `f : R^{n x p} -> R`.
pub trait Problem: Sync {
    /// `(n, p)`.
    fn dims(&self) -> (usize, usize);

    fn value(&self, x: &Mat) -> f64;

    /// Euclidean gradient `grad f(X)`.
    fn euclid_grad(&self, x: &Mat) -> Mat;

    /// Euclidean Hessian-vector product `hess f(X)[V]`.
    fn hvp(&self, x: &Mat, v: &Mat) -> Mat;
}

impl<P: Problem + ?Sized> Problem for &P {
    fn dims(&self) -> (usize, usize) {
        (**self).dims()
    }
    fn value(&self, x: &Mat) -> f64 {
        (**self).value(x)
    }
    fn euclid_grad(&self, x: &Mat) -> Mat {
        (**self).euclid_grad(x)
    }
    fn hvp(&self, x: &Mat, v: &Mat) -> Mat {
        (**self).hvp(x, v)
    }
}

impl<P: Problem + ?Sized> Problem for Box<P> {
    fn dims(&self) -> (usize, usize) {
        (**self).dims()
    }
    fn value(&self, x: &Mat) -> f64 {
        (**self).value(x)
    }
    fn euclid_grad(&self, x: &Mat) -> Mat {
        (**self).euclid_grad(x)
    }
    fn hvp(&self, x: &Mat, v: &Mat) -> Mat {
        (**self).hvp(x, v)
    }
}

/// Evaluation counters returned by [`CountingProblem::counts`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct EvalCounts {
    pub value: u64,
    pub grad: u64,
    pub hvp: u64,
}

/// Wraps a problem and counts value, gradient and Hessian-vector calls.
/// Counters are atomic so the wrapper stays `Sync`.
pub struct CountingProblem<P> {
    inner: P,
    value: AtomicU64,
    grad: AtomicU64,
    hvp: AtomicU64,
}

impl<P: Problem> CountingProblem<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            value: AtomicU64::new(0),
            grad: AtomicU64::new(0),
            hvp: AtomicU64::new(0),
        }
    }

    pub fn counts(&self) -> EvalCounts {
        EvalCounts {
            value: self.value.load(Ordering::Relaxed),
            grad: self.grad.load(Ordering::Relaxed),
            hvp: self.hvp.load(Ordering::Relaxed),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Problem> Problem for CountingProblem<P> {
    fn dims(&self) -> (usize, usize) {
        self.inner.dims()
    }
    fn value(&self, x: &Mat) -> f64 {
        self.value.fetch_add(1, Ordering::Relaxed);
        self.inner.value(x)
    }
    fn euclid_grad(&self, x: &Mat) -> Mat {
        self.grad.fetch_add(1, Ordering::Relaxed);
        self.inner.euclid_grad(x)
    }
    fn hvp(&self, x: &Mat, v: &Mat) -> Mat {
        self.hvp.fetch_add(1, Ordering::Relaxed);
        self.inner.hvp(x, v)
    }
}

/// Weight `lambda > 0` of the infeasibility gradient in the first-order field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandingParams {
    pub lambda: f64,
    pub eps: f64,
}

impl LandingParams {
    pub fn new(lambda: f64, eps: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid("eps", format!("must lie in (0, 1), got {eps}")));
        }
        Ok(Self { lambda, eps })
    }
}

impl Default for LandingParams {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            eps: 0.5,
        }
    }
}

/// Per-point cache shared by all operators at `X`.
pub struct FieldContext<'a, P: Problem + ?Sized> {
    prob: &'a P,
    point: &'a AmbientPoint,
    grad: Mat,
    /// `G(X) = 2 skew(grad f X^T) X`
    rgrad: Mat,
    /// `(X^T X)^{-1} X^T G`
    q_xtg: Mat,
}

impl<'a, P: Problem + ?Sized> FieldContext<'a, P> {
    pub fn new(prob: &'a P, point: &'a AmbientPoint) -> Result<Self> {
        if prob.dims() != point.shape() {
            return Err(Error::ShapeMismatch {
                expected: prob.dims(),
                found: point.shape(),
            });
        }
        let x = point.matrix();
        let grad = prob.euclid_grad(x);
        let rgrad = skew_apply(&grad, x, x);
        let q_xtg = point.gram_solve(&x.tr_mul(&rgrad));
        Ok(Self {
            prob,
            point,
            grad,
            rgrad,
            q_xtg,
        })
    }

    pub fn point(&self) -> &AmbientPoint {
        self.point
    }

    pub fn problem(&self) -> &P {
        self.prob
    }

    pub fn euclid_grad(&self) -> &Mat {
        &self.grad
    }

    /// `grad f(X) = T_1(X) = 2 skew(grad f(X) X^T) X`.
    pub fn riemannian_gradient(&self) -> TangentVector {
        TangentVector(self.rgrad.clone())
    }

    pub fn riemannian_gradient_norm(&self) -> f64 {
        self.rgrad.norm()
    }

    /// `Omega(X) = skew(grad f(X) X^T)` as an explicit `n x n` matrix.
    /// Diagnostics only.
    pub fn omega(&self) -> Mat {
        crate::linalg::skew(&(&self.grad * self.point.matrix().transpose()))
    }

    /// `||Omega(X)||_F` without forming `Omega`:
    /// `||Omega||^2 = 1/2 (tr(X^T X g^T g) - tr((X^T g)^2))`.
    pub fn omega_norm(&self) -> f64 {
        let x = self.point.matrix();
        let xtx = x.tr_mul(x);
        let gtg = self.grad.tr_mul(&self.grad);
        let xtg = x.tr_mul(&self.grad);
        let sq = 0.5 * (xtx.dot(&gtg) - (&xtg * &xtg).trace());
        sq.max(0.0).sqrt()
    }

    /// `Lambda_1(X) = T_1(X) + lambda X (X^T X - I)`.
    pub fn first_order_landing_field(&self, lambda: f64) -> Mat {
        let normal = self.point.matrix() * self.point.gram_residual();
        &self.rgrad + normal * lambda
    }

    /// `2 skew(hess f[V] X^T + grad f V^T) X`, shared by `A_T`, `A_N`, the
    /// Jacobian and the second-order landing operator.
    fn dt1_tangent_part(&self, v: &Mat) -> Mat {
        let x = self.point.matrix();
        let hv = self.prob.hvp(x, v);
        skew_apply(&hv, x, x) + skew_apply(&self.grad, v, x)
    }

    /// Unchecked `A_T` for use inside Krylov solves.
    pub fn apply_at_raw(&self, v: &Mat) -> Mat {
        self.dt1_tangent_part(v)
    }

    /// `A_T(X)[V] = 2 skew(hess f[V] X^T + grad f V^T) X` for tangent `V`.
    pub fn apply_at(&self, v: &TangentVector) -> Result<TangentVector> {
        self.check_tangent(v.matrix())?;
        Ok(TangentVector(self.apply_at_raw(v.matrix())))
    }

    /// `A_N(X)[V]`, same expression as `A_T` on a normal argument.
    pub fn apply_an(&self, v: &NormalVector) -> Result<TangentVector> {
        self.check_normal(v.matrix())?;
        Ok(TangentVector(self.dt1_tangent_part(v.matrix())))
    }

    /// `Xi_X(V) = 1/2 (V Q X^T G + G Q X^T V) + 1/4 X Q (V^T G + G^T V)`.
    fn xi(&self, v: &Mat) -> Mat {
        let x = self.point.matrix();
        let g = &self.rgrad;
        let q_xtv = self.point.gram_solve(&x.tr_mul(v));
        let vtg = v.tr_mul(g);
        let first = (v * &self.q_xtg + g * q_xtv) * 0.5;
        let second = x * self.point.gram_solve(&(&vtg + vtg.transpose())) * 0.25;
        first + second
    }

    /// Unchecked Riemannian Hessian for use inside Krylov solves.
    pub fn apply_hessian_raw(&self, v: &Mat) -> Mat {
        let x = self.point.matrix();
        let xi = self.xi(v);
        // (I + P_X) Xi with P_X = X Q X^T
        let ip_xi = &xi + x * self.point.gram_solve(&x.tr_mul(&xi));
        let ambient = self.dt1_tangent_part(v) + skew_apply(&self.grad, x, v) - ip_xi;
        self.point.project_tangent(&ambient).into_matrix()
    }

    /// Riemannian Hessian on the layered manifold under the metric `g`.
    pub fn apply_hessian(&self, v: &TangentVector) -> Result<TangentVector> {
        self.check_tangent(v.matrix())?;
        Ok(TangentVector(self.apply_hessian_raw(v.matrix())))
    }

    /// Order-one Newton–Schulz normal component `N_1(X) = -1/2 X E`.
    pub fn normal_component(&self) -> NormalVector {
        NormalVector(self.point.matrix() * self.point.gram_residual() * -0.5)
    }

    /// Right-hand side `b = -grad f(X) - A_N(X)[N_1(X)]` of both tangent
    /// Newton systems.
    pub fn newton_rhs(&self) -> TangentVector {
        let n = self.normal_component();
        TangentVector(-(&self.rgrad + self.dt1_tangent_part(n.matrix())))
    }

    /// Jacobian of `Lambda_1` applied to an arbitrary ambient direction:
    /// `2 skew(hess f[V] X^T + grad f V^T) X + 2 skew(grad f X^T) V
    ///  + lambda V E + 2 lambda X sym(X^T V)`.
    pub fn apply_landing_jacobian(&self, v: &Mat, lambda: f64) -> Mat {
        let x = self.point.matrix();
        self.dt1_tangent_part(v)
            + skew_apply(&self.grad, x, v)
            + (v * self.point.gram_residual()) * lambda
            + (x * sym(&x.tr_mul(v))) * (2.0 * lambda)
    }

    /// Second-order landing operator
    /// `A(X)[V] = 2 skew(hess f[V] X^T + grad f V^T) X + 2 lambda Pi_N(V)`.
    pub fn apply_sol_operator(&self, v: &Mat, lambda: f64) -> Mat {
        self.dt1_tangent_part(v) + self.point.project_normal(v).into_matrix() * (2.0 * lambda)
    }

    fn check_tangent(&self, v: &Mat) -> Result<()> {
        self.point.check_shape(v)?;
        if cfg!(debug_assertions) {
            let r = self.point.tangency_residual(v);
            if r > CONTRACT_TOL {
                return Err(Error::ContractViolation(format!(
                    "operator argument is not tangent (residual {r:e})"
                )));
            }
        }
        Ok(())
    }

    fn check_normal(&self, v: &Mat) -> Result<()> {
        self.point.check_shape(v)?;
        if cfg!(debug_assertions) {
            let r = self.point.normality_residual(v);
            if r > CONTRACT_TOL {
                return Err(Error::ContractViolation(format!(
                    "operator argument is not normal (residual {r:e})"
                )));
            }
        }
        Ok(())
    }
}

pub fn riemannian_gradient<P: Problem + ?Sized>(prob: &P, x: &AmbientPoint) -> Result<TangentVector> {
    Ok(FieldContext::new(prob, x)?.riemannian_gradient())
}

pub fn first_order_landing_field<P: Problem + ?Sized>(
    prob: &P,
    x: &AmbientPoint,
    params: LandingParams,
) -> Result<Mat> {
    Ok(FieldContext::new(prob, x)?.first_order_landing_field(params.lambda))
}

pub fn apply_at<P: Problem + ?Sized>(prob: &P, x: &AmbientPoint, v: &TangentVector) -> Result<TangentVector> {
    FieldContext::new(prob, x)?.apply_at(v)
}

pub fn apply_an<P: Problem + ?Sized>(prob: &P, x: &AmbientPoint, v: &NormalVector) -> Result<TangentVector> {
    FieldContext::new(prob, x)?.apply_an(v)
}

pub fn apply_hessian<P: Problem + ?Sized>(
    prob: &P,
    x: &AmbientPoint,
    v: &TangentVector,
) -> Result<TangentVector> {
    FieldContext::new(prob, x)?.apply_hessian(v)
}

pub fn newton_rhs<P: Problem + ?Sized>(prob: &P, x: &AmbientPoint) -> Result<TangentVector> {
    Ok(FieldContext::new(prob, x)?.newton_rhs())
}

pub fn apply_landing_jacobian<P: Problem + ?Sized>(
    prob: &P,
    x: &AmbientPoint,
    v: &Mat,
    lambda: f64,
) -> Result<Mat> {
    x.check_shape(v)?;
    Ok(FieldContext::new(prob, x)?.apply_landing_jacobian(v, lambda))
}

pub fn apply_sol_operator<P: Problem + ?Sized>(
    prob: &P,
    x: &AmbientPoint,
    v: &Mat,
    lambda: f64,
) -> Result<Mat> {
    x.check_shape(v)?;
    Ok(FieldContext::new(prob, x)?.apply_sol_operator(v, lambda))
}
