//! Geometry of the layered manifold `St_{X^T X}(p, n)`.
//!
//! An [`AmbientPoint`] is any full-column-rank `n x p` matrix. Around it the
//! ambient space splits into the tangent space of the level set
//! `{Z : Z^T Z = X^T X}` and its normal space under the metric
//!
//! ```text
//! g_X(xi, eta) = < xi, (I - 1/2 X (X^T X)^{-1} X^T) eta (X^T X)^{-1} >
//! ```
//!
//! All applications of `(X^T X)^{-1}` go through a Cholesky factorization of
//! the `p x p` Gram matrix computed once when the point is built.

use nalgebra::{Cholesky, Dyn};

use crate::error::{invalid, Error, Result};
use crate::linalg::{identity, inner, sym, Mat};

/// Smallest admissible eigenvalue of `X^T X`.
pub const SINGULARITY_THRESHOLD: f64 = 1e-12;

/// Relative tolerance used by the tangency and normality checks.
pub const TANGENCY_TOL: f64 = 1e-10;

/// Full-column-rank iterate with its Gram residual `E = X^T X - I` cached.
#[derive(Clone, Debug)]
pub struct AmbientPoint {
    x: Mat,
    e: Mat,
    feas: f64,
    chol: Cholesky<f64, Dyn>,
}

impl AmbientPoint {
    pub fn new(x: Mat) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 || n < p {
            return Err(Error::InvalidDimensions(format!(
                "ambient point must be n x p with 1 <= p <= n, got {n} x {p}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("X", "contains non-finite entries"));
        }
        let gram = sym(&x.tr_mul(&x));
        let min_eigenvalue = gram.symmetric_eigenvalues().min();
        if !(min_eigenvalue >= SINGULARITY_THRESHOLD) {
            return Err(Error::SingularBase { min_eigenvalue });
        }
        let chol = Cholesky::new(gram.clone()).ok_or(Error::SingularBase { min_eigenvalue })?;
        let e = gram - identity(p);
        let feas = e.norm();
        Ok(Self { x, e, feas, chol })
    }

    pub fn matrix(&self) -> &Mat {
        &self.x
    }

    pub fn into_matrix(self) -> Mat {
        self.x
    }

    /// `(n, p)`.
    pub fn shape(&self) -> (usize, usize) {
        self.x.shape()
    }

    /// `E = X^T X - I_p`.
    pub fn gram_residual(&self) -> &Mat {
        &self.e
    }

    /// `||X^T X - I||_F`.
    pub fn feasibility(&self) -> f64 {
        self.feas
    }

    /// Returns `(1/4 ||E||_F^2, ||E||_F)`.
    pub fn infeasibility(&self) -> (f64, f64) {
        (0.25 * self.feas * self.feas, self.feas)
    }

    /// Euclidean gradient of the infeasibility measure, `X E`.
    pub fn infeasibility_gradient(&self) -> NormalVector {
        NormalVector(&self.x * &self.e)
    }

    pub fn in_safe_region(&self, region: SafeRegion) -> bool {
        self.feas <= region.eps()
    }

    /// `Q S` with `Q = (X^T X)^{-1}`.
    pub fn gram_solve(&self, s: &Mat) -> Mat {
        self.chol.solve(s)
    }

    /// `M Q` with `Q = (X^T X)^{-1}`.
    pub fn gram_solve_right(&self, m: &Mat) -> Mat {
        self.chol.solve(&m.transpose()).transpose()
    }

    /// `(X^T X)^{-1}` as an explicit matrix. Only meant for diagnostics.
    pub fn gram_inverse(&self) -> Mat {
        self.chol.inverse()
    }

    /// `X (X^T X)^{-1} sym(X^T A)`, the normal part of `A`.
    fn normal_part(&self, a: &Mat) -> Mat {
        &self.x * self.gram_solve(&sym(&self.x.tr_mul(a)))
    }

    /// g-orthogonal projection onto the tangent space,
    /// `A - X (X^T X)^{-1} sym(X^T A)`.
    pub fn project_tangent(&self, a: &Mat) -> TangentVector {
        TangentVector(a - self.normal_part(a))
    }

    /// Complementary projection `A - project_tangent(A)`.
    pub fn project_normal(&self, a: &Mat) -> NormalVector {
        NormalVector(self.normal_part(a))
    }

    /// `g_X(xi, eta)`.
    pub fn metric_inner(&self, xi: &Mat, eta: &Mat) -> f64 {
        let m = self.gram_solve_right(eta);
        let half_p = &self.x * self.gram_solve(&self.x.tr_mul(&m)) * 0.5;
        inner(xi, &(m - half_p))
    }

    pub fn metric_norm(&self, xi: &Mat) -> f64 {
        self.metric_inner(xi, xi).max(0.0).sqrt()
    }

    /// Tangency residual `||V^T X + X^T V||_F / (||V||_F ||X||_2)`.
    pub fn tangency_residual(&self, v: &Mat) -> f64 {
        let vn = v.norm();
        if vn == 0.0 {
            return 0.0;
        }
        let s = v.tr_mul(&self.x);
        let r = (&s + s.transpose()).norm();
        r / (vn * spectral_norm(&self.x))
    }

    /// Normality residual `||Pi_T(V)||_F / ||V||_F`.
    pub fn normality_residual(&self, v: &Mat) -> f64 {
        let vn = v.norm();
        if vn == 0.0 {
            return 0.0;
        }
        self.project_tangent(v).0.norm() / vn
    }

    /// Wraps `v` as a tangent vector after checking the tangency identity.
    pub fn tangent(&self, v: Mat) -> Result<TangentVector> {
        self.check_shape(&v)?;
        let r = self.tangency_residual(&v);
        if r > TANGENCY_TOL {
            return Err(Error::ContractViolation(format!(
                "vector is not tangent (residual {r:e})"
            )));
        }
        Ok(TangentVector(v))
    }

    /// Wraps `v` as a normal vector after checking it has no tangent part.
    pub fn normal(&self, v: Mat) -> Result<NormalVector> {
        self.check_shape(&v)?;
        let r = self.normality_residual(&v);
        if r > TANGENCY_TOL {
            return Err(Error::ContractViolation(format!(
                "vector is not normal (residual {r:e})"
            )));
        }
        Ok(NormalVector(v))
    }

    pub(crate) fn check_shape(&self, v: &Mat) -> Result<()> {
        if v.shape() != self.x.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.x.shape(),
                found: v.shape(),
            });
        }
        Ok(())
    }

    /// Moves along `dir` by `step`, returning a new point.
    pub fn step(&self, dir: &Mat, step: f64) -> Result<AmbientPoint> {
        AmbientPoint::new(&self.x + dir * step)
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    let (n, p) = m.shape();
    let g = if n >= p { m.tr_mul(m) } else { m * m.transpose() };
    g.symmetric_eigenvalues().max().max(0.0).sqrt()
}

macro_rules! tagged_vector {
    ($name:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name(pub(crate) Mat);

        impl $name {
            pub fn matrix(&self) -> &Mat {
                &self.0
            }

            pub fn into_matrix(self) -> Mat {
                self.0
            }

            pub fn norm(&self) -> f64 {
                self.0.norm()
            }

            pub fn zeros(n: usize, p: usize) -> Self {
                Self(Mat::zeros(n, p))
            }
        }

        impl AsRef<Mat> for $name {
            fn as_ref(&self) -> &Mat {
                &self.0
            }
        }
    };
}

tagged_vector!(
    TangentVector,
    "Ambient matrix in the tangent space of the layered manifold through its base point."
);
tagged_vector!(
    NormalVector,
    "Ambient matrix in the g-normal space of the layered manifold through its base point."
);

/// Radius of the safe region `{X : ||X^T X - I||_F <= eps}`, `0 < eps < 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafeRegion(f64);

impl SafeRegion {
    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps < 1.0 {
            Ok(Self(eps))
        } else {
            Err(invalid("eps", format!("must lie in (0, 1), got {eps}")))
        }
    }

    pub fn eps(self) -> f64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian, haar_stiefel, rel_diff};
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(x: f64) -> AmbientPoint {
        AmbientPoint::new(dmatrix![x]).unwrap()
    }

    /// Random point whose singular values are spread so that `||E||_F` is
    /// roughly `target`.
    fn random_near_stiefel(rng: &mut ChaCha8Rng, n: usize, p: usize, target: f64) -> AmbientPoint {
        let q = haar_stiefel(rng, n, p);
        let s = sym(&gaussian(rng, p, p));
        let s = &s * (target / s.norm());
        // X = Q (I + S)^{1/2} approximately; first-order is enough here.
        AmbientPoint::new(&q * (identity(p) + &s * 0.5)).unwrap()
    }

    #[test]
    fn gram_residual_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = AmbientPoint::new(haar_stiefel(&mut rng, 6, 3)).unwrap();
        assert!(q.gram_residual().amax() <= 1e-15 * 4.0);

        assert!((scalar(1.2).gram_residual()[(0, 0)] - 0.44).abs() < 1e-15);

        let x = dmatrix![2f64.sqrt(), 0.0; 0.0, 1.0; 0.0, 0.0];
        let e = AmbientPoint::new(x).unwrap().gram_residual().clone();
        assert!((e - dmatrix![1.0, 0.0; 0.0, 0.0]).norm() < 1e-15);
    }

    #[test]
    fn construction_rejects_bad_shapes_and_rank() {
        assert!(matches!(
            AmbientPoint::new(Mat::zeros(2, 3)),
            Err(Error::InvalidDimensions(_))
        ));
        let rank_one = dmatrix![1.0, 1.0; 1.0, 1.0; 0.0, 0.0];
        assert!(matches!(
            AmbientPoint::new(rank_one),
            Err(Error::SingularBase { .. })
        ));
    }

    #[test]
    fn infeasibility_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = AmbientPoint::new(haar_stiefel(&mut rng, 5, 5)).unwrap();
        let (v, f) = q.infeasibility();
        assert!(v < 1e-28 && f < 1e-14);

        let (v, f) = scalar(1.2).infeasibility();
        assert!((v - 0.0484).abs() < 1e-15);
        assert!((f - 0.44).abs() < 1e-15);

        // E = diag(0.3, -0.4) from X = diag(sqrt(1.3), sqrt(0.6)).
        let x = dmatrix![1.3f64.sqrt(), 0.0; 0.0, 0.6f64.sqrt()];
        let (v, f) = AmbientPoint::new(x).unwrap().infeasibility();
        assert!((v - 0.0625).abs() < 1e-15);
        assert!((f - 0.5).abs() < 1e-15);
    }

    #[test]
    fn infeasibility_gradient_examples() {
        assert!((scalar(1.2).infeasibility_gradient().0[(0, 0)] - 0.528).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = AmbientPoint::new(haar_stiefel(&mut rng, 5, 2)).unwrap();
        assert!(q.infeasibility_gradient().norm() < 1e-14);

        // central finite differences of 1/4 ||X^T X - I||^2
        for _ in 0..5 {
            let x = random_near_stiefel(&mut rng, 8, 3, 0.3);
            let h = gaussian(&mut rng, 8, 3);
            let step = 1e-5;
            let fp = AmbientPoint::new(x.matrix() + &h * step).unwrap().infeasibility().0;
            let fm = AmbientPoint::new(x.matrix() - &h * step).unwrap().infeasibility().0;
            let fd = (fp - fm) / (2.0 * step);
            let exact = inner(x.infeasibility_gradient().matrix(), &h);
            assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-12), "{fd} vs {exact}");
            // and it lies in the normal space
            assert!(x.normality_residual(x.infeasibility_gradient().matrix()) < 1e-12);
        }
    }

    #[test]
    fn project_tangent_examples() {
        let x = AmbientPoint::new(dmatrix![1.0; 0.0]).unwrap();
        let t = x.project_tangent(&dmatrix![3.0; 4.0]);
        assert!((t.0 - dmatrix![0.0; 4.0]).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = AmbientPoint::new(haar_stiefel(&mut rng, 7, 3)).unwrap();
        assert!(q.project_tangent(q.matrix()).norm() < 1e-13);

        let x = random_near_stiefel(&mut rng, 7, 3, 0.4);
        let a = gaussian(&mut rng, 7, 3);
        let t = x.project_tangent(&a);
        assert!(x.tangency_residual(t.matrix()) < 1e-13);
        let tt = x.project_tangent(t.matrix());
        assert!((tt.0 - &t.0).norm() <= 1e-12 * t.norm());
    }

    #[test]
    fn project_normal_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_near_stiefel(&mut rng, 9, 4, 0.3);
        let a = gaussian(&mut rng, 9, 4);
        let t = x.project_tangent(&a);
        assert!(x.project_normal(t.matrix()).norm() <= 1e-13 * t.norm());

        let gn = x.infeasibility_gradient();
        assert!(rel_diff(x.project_normal(gn.matrix()).matrix(), gn.matrix(), 1e-300) < 1e-12);

        let n = x.project_normal(&a);
        assert!(rel_diff(&(t.0 + &n.0), &a, 1e-300) < 1e-13);
        assert!(x.normality_residual(n.matrix()) < 1e-12);
    }

    #[test]
    fn metric_inner_examples() {
        let x = AmbientPoint::new(dmatrix![1.0; 0.0]).unwrap();
        let xi = dmatrix![0.0; 2.0];
        assert!((x.metric_inner(&xi, &xi) - 4.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = AmbientPoint::new(haar_stiefel(&mut rng, 6, 3)).unwrap();
        assert!((q.metric_inner(q.matrix(), q.matrix()) - 1.5).abs() < 1e-13);

        let x = random_near_stiefel(&mut rng, 6, 3, 0.5);
        for _ in 0..100 {
            let a = gaussian(&mut rng, 6, 3);
            let b = gaussian(&mut rng, 6, 3);
            let ab = x.metric_inner(&a, &b);
            let ba = x.metric_inner(&b, &a);
            assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(ba.abs()));
            assert!(x.metric_inner(&a, &a) > 0.0);
        }
    }

    #[test]
    fn safe_region_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = AmbientPoint::new(haar_stiefel(&mut rng, 4, 2)).unwrap();
        assert!(q.in_safe_region(SafeRegion::new(1e-3).unwrap()));
        assert!(!scalar(1.2).in_safe_region(SafeRegion::new(0.4).unwrap()));
        assert!(scalar(1.2).in_safe_region(SafeRegion::new(0.5).unwrap()));
        assert!(SafeRegion::new(1.0).is_err());
        assert!(SafeRegion::new(0.0).is_err());
    }

    #[test]
    fn tangent_and_normal_wrappers_check_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_near_stiefel(&mut rng, 6, 2, 0.2);
        let a = gaussian(&mut rng, 6, 2);
        assert!(x.tangent(a.clone()).is_err());
        assert!(x.normal(a.clone()).is_err());
        assert!(x.tangent(x.project_tangent(&a).into_matrix()).is_ok());
        assert!(x.normal(x.project_normal(&a).into_matrix()).is_ok());
        assert!(matches!(
            x.tangent(Mat::zeros(3, 2)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn safe_region_singular_value_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let eps: f64 = rng.random_range(0.05..0.95);
            let target = rng.random_range(0.0..1.2);
            let x = random_near_stiefel(&mut rng, 10, 4, target);
            if !x.in_safe_region(SafeRegion::new(eps).unwrap()) {
                continue;
            }
            assert!(spectral_norm(x.matrix()) <= (1.0 + eps).sqrt() + 1e-12);
            assert!(spectral_norm(&x.gram_inverse()) <= 1.0 / (1.0 - eps) + 1e-12);
        }
    }

    #[test]
    fn projections_are_complementary_and_g_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let x = random_near_stiefel(&mut rng, 8, 3, 0.6);
            let a = gaussian(&mut rng, 8, 3);
            let b = gaussian(&mut rng, 8, 3);
            let ta = x.project_tangent(&a);
            let nb = x.project_normal(&b);
            let cross = x.metric_inner(ta.matrix(), nb.matrix());
            assert!(cross.abs() <= 1e-10 * a.norm() * b.norm());
        }
    }
}
