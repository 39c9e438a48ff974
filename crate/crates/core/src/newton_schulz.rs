//! Order-`r` Newton–Schulz updates.
//!
//! `q_r(S)` is the degree-`r` Taylor polynomial of `(I + S)^{-1/2}`,
//!
//! ```text
//! q_r(S) = sum_{j=0}^{r} (-1)^j (2j)! / (j!)^2 / 4^j  S^j
//! ```
//!
//! and the additive update `N_r(X) = X (q_r(E) - I)` with `E = X^T X - I`
//! lies in the normal space of the layered manifold through `X`. Iterating
//! `X <- X + N_r(X)` drives `||E||_F` to zero with order `r + 1`.

use crate::error::{invalid, Error, Result};
use crate::geometry::{AmbientPoint, NormalVector};
use crate::linalg::{identity, Mat};

/// Feasibility level below which iterates are treated as converged to
/// working precision.
pub const ROUNDOFF_FLOOR: f64 = 1e-14;

pub const MAX_ORDER: u32 = 8;

/// Polynomial order `r`, `1 <= r <= 8`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NsOrder(u32);

impl NsOrder {
    pub const ONE: NsOrder = NsOrder(1);

    pub fn new(r: u32) -> Result<Self> {
        if (1..=MAX_ORDER).contains(&r) {
            Ok(Self(r))
        } else {
            Err(invalid("r", format!("order must lie in 1..={MAX_ORDER}, got {r}")))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Coefficients `c_0, ..., c_r` of `q_r`.
    ///
    /// Each is formed as the exact ratio of the integers `C(2j, j)` and `4^j`
    /// before a single rounding to `f64`.
    pub fn coefficients(self) -> Vec<f64> {
        (0..=self.0)
            .map(|j| {
                let num = central_binomial(j);
                let den = 4u64.pow(j);
                let c = num as f64 / den as f64;
                if j % 2 == 0 {
                    c
                } else {
                    -c
                }
            })
            .collect()
    }
}

/// `C(2j, j) = (2j)! / (j!)^2`, exact for the supported range.
fn central_binomial(j: u32) -> u64 {
    let j = u64::from(j);
    (1..=j).fold(1u64, |acc, k| acc * (j + k) / k)
}

/// Evaluates `q_r(S)` with Horner's rule (`r` products of size `p x p`).
pub fn ns_polynomial(s: &Mat, r: NsOrder) -> Mat {
    let p = s.nrows();
    let coeffs = r.coefficients();
    let mut q = identity(p) * coeffs[r.0 as usize];
    for &c in coeffs[..r.0 as usize].iter().rev() {
        q = &q * s;
        for i in 0..p {
            q[(i, i)] += c;
        }
    }
    q
}

/// `N_r(X) = X (q_r(E) - I)`.
pub fn ns_update(x: &AmbientPoint, r: NsOrder) -> NormalVector {
    let mut q = ns_polynomial(x.gram_residual(), r);
    for i in 0..q.nrows() {
        q[(i, i)] -= 1.0;
    }
    NormalVector(x.matrix() * q)
}

/// Result of [`ns_orthogonalize`].
#[derive(Clone, Debug)]
pub struct Orthogonalized {
    pub point: AmbientPoint,
    pub iterations: usize,
    /// `||E_k||_F` for `k = 0..=iterations`.
    pub feas_history: Vec<f64>,
}

/// Iterates `X <- X q_r(X^T X - I)` until `||E||_F <= max(tol, 1e-14)`.
pub fn ns_orthogonalize(
    x0: &AmbientPoint,
    r: NsOrder,
    tol: f64,
    max_iter: usize,
) -> Result<Orthogonalized> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    if x0.feasibility() >= 1.0 {
        return Err(Error::NotInSafeRegion {
            feas: x0.feasibility(),
            eps: 1.0,
        });
    }
    let target = tol.max(ROUNDOFF_FLOOR);
    let mut point = x0.clone();
    let mut feas_history = vec![point.feasibility()];
    let mut iterations = 0;
    while point.feasibility() > target {
        if iterations == max_iter {
            return Err(Error::MaxIterExceeded {
                iterations,
                residual: point.feasibility(),
            });
        }
        let q = ns_polynomial(point.gram_residual(), r);
        point = AmbientPoint::new(point.matrix() * q)?;
        feas_history.push(point.feasibility());
        iterations += 1;
    }
    Ok(Orthogonalized {
        point,
        iterations,
        feas_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian, haar_stiefel, rel_diff, sym};
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn order(r: u32) -> NsOrder {
        NsOrder::new(r).unwrap()
    }

    fn point_with_feas(rng: &mut ChaCha8Rng, n: usize, p: usize, feas: f64) -> AmbientPoint {
        // X = Q (I + S)^{1/2} through an eigendecomposition so ||E||_F = feas exactly.
        let q = haar_stiefel(rng, n, p);
        let s = sym(&gaussian(rng, p, p));
        let s = &s * (feas / s.norm());
        let eig = s.symmetric_eigen();
        let root = eig.eigenvalues.map(|l| (1.0 + l).sqrt());
        let half = &eig.eigenvectors
            * Mat::from_diagonal(&root)
            * eig.eigenvectors.transpose();
        AmbientPoint::new(q * half).unwrap()
    }

    #[test]
    fn coefficients_are_exact() {
        assert_eq!(order(2).coefficients(), vec![1.0, -0.5, 0.375]);
        let c8 = order(8).coefficients();
        assert_eq!(c8[8], 12870.0 / 65536.0);
        assert!(NsOrder::new(0).is_err());
        assert!(NsOrder::new(9).is_err());
    }

    #[test]
    fn polynomial_examples() {
        for r in 1..=8 {
            let q = ns_polynomial(&Mat::zeros(3, 3), order(r));
            assert_eq!(q, identity(3));
        }
        let s = dmatrix![0.44];
        assert!((ns_polynomial(&s, order(1))[(0, 0)] - 0.78).abs() < 1e-15);
        assert!((ns_polynomial(&s, order(2))[(0, 0)] - 0.8526).abs() < 1e-15);
    }

    #[test]
    fn polynomial_commutes_with_argument() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sym(&gaussian(&mut rng, 5, 5)) * 0.2;
        for r in 1..=8 {
            let q = ns_polynomial(&s, order(r));
            assert!((&q - q.transpose()).norm() <= 1e-14 * q.norm());
            assert!((&q * &s - &s * &q).norm() <= 1e-12 * s.norm());
        }
    }

    #[test]
    fn update_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = AmbientPoint::new(haar_stiefel(&mut rng, 6, 3)).unwrap();
        assert!(ns_update(&q, order(1)).norm() < 1e-14);

        let x = AmbientPoint::new(dmatrix![1.2]).unwrap();
        assert!((ns_update(&x, order(1)).matrix()[(0, 0)] + 0.264).abs() < 1e-15);

        for _ in 0..10 {
            let x = point_with_feas(&mut rng, 9, 4, 0.3);
            let n1 = ns_update(&x, order(1));
            let half_grad = x.infeasibility_gradient().into_matrix() * -0.5;
            assert!(rel_diff(n1.matrix(), &half_grad, 1e-300) <= 1e-14);
        }
    }

    #[test]
    fn update_is_normal_under_both_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for r in 1..=4 {
            let x = point_with_feas(&mut rng, 10, 4, 0.4);
            let n = ns_update(&x, order(r));
            assert!(x.normality_residual(n.matrix()) <= 1e-10);
            // Euclidean normal space {X S : S symmetric}: (X^T X)(q_r(E) - I) is symmetric.
            let gram = x.matrix().tr_mul(x.matrix());
            let mut q = ns_polynomial(x.gram_residual(), order(r));
            for i in 0..4 {
                q[(i, i)] -= 1.0;
            }
            let s = gram * q;
            assert!((&s - s.transpose()).norm() <= 1e-13 * s.norm());
        }
    }

    #[test]
    fn update_is_orthogonally_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = point_with_feas(&mut rng, 7, 3, 0.3);
        let u = haar_stiefel(&mut rng, 7, 7);
        let v = haar_stiefel(&mut rng, 3, 3);
        let uxv = AmbientPoint::new(&u * x.matrix() * &v).unwrap();
        for r in 1..=3 {
            let lhs = ns_update(&uxv, order(r)).into_matrix();
            let rhs = &u * ns_update(&x, order(r)).matrix() * &v;
            assert!(rel_diff(&lhs, &rhs, 1e-300) <= 1e-12);
        }
    }

    #[test]
    fn orthogonalize_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = AmbientPoint::new(haar_stiefel(&mut rng, 8, 3)).unwrap();
        let out = ns_orthogonalize(&q, order(1), 1e-12, 10).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.point.matrix(), q.matrix());

        let x = point_with_feas(&mut rng, 8, 3, 0.1);
        let out = ns_orthogonalize(&x, order(1), 1e-8, 10).unwrap();
        assert!(out.iterations <= 3);
        for (k, e) in out.feas_history.iter().enumerate() {
            assert!(*e <= 0.1f64.powi(1 << k) + 1e-15);
        }

        let x = AmbientPoint::new(dmatrix![1.2]).unwrap();
        let out = ns_orthogonalize(&x, order(1), 1e-14, 1).unwrap_err();
        assert!(matches!(out, Error::MaxIterExceeded { iterations: 1, .. }));
        let one = AmbientPoint::new(dmatrix![1.2 * 0.78]).unwrap();
        assert!((one.matrix()[(0, 0)] - 0.936).abs() < 1e-15);
        assert!((one.gram_residual()[(0, 0)] + 0.123904).abs() < 1e-15);
        assert!(one.feasibility() <= 0.44 * 0.44);
    }

    #[test]
    fn orthogonalize_rejects_points_outside_the_unit_region() {
        let x = AmbientPoint::new(dmatrix![1.5]).unwrap();
        assert!(matches!(
            ns_orthogonalize(&x, order(1), 1e-10, 50),
            Err(Error::NotInSafeRegion { .. })
        ));
    }

    #[test]
    fn orthogonalize_iteration_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for r in 1..=4 {
            for &feas in &[0.05, 0.2, 0.6] {
                let x = point_with_feas(&mut rng, 12, 5, feas);
                let tol = 1e-12;
                let out = ns_orthogonalize(&x, order(r), tol, 100).unwrap();
                let bound = ((tol.ln() / feas.ln()).ln() / f64::from(r + 1).ln()).ceil() as usize + 1;
                assert!(out.iterations <= bound, "r={r} feas={feas}: {} > {bound}", out.iterations);
                assert!(out.point.feasibility() <= tol);
            }
        }
    }
}
