//! Benchmark objectives and their synthetic instance generators.
//!
//! Each objective implements [`Problem`](crate::fields::Problem) with an
//! analytic gradient and Hessian-vector product. [`check_derivatives`] is the
//! finite-difference suite every objective is expected to pass.

mod ica;
pub mod io;
mod pca;
mod procrustes;
mod synth;

pub use ica::{Ica, IcaData};
pub use pca::{Pca, PcaData, DENSE_COVARIANCE_LIMIT};
pub use procrustes::{Procrustes, ProcrustesData};
pub use synth::{synth_ica, synth_pca, synth_procrustes, whiten};

use rand::Rng;

use crate::fields::Problem;
use crate::linalg::{gaussian, haar_stiefel, inner, Mat};

/// Step used by the central differences in [`check_derivatives`].
pub const FD_STEP: f64 = 1e-5;

/// Worst relative errors observed by [`check_derivatives`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DerivativeReport {
    /// Directional derivative of `value` vs `<grad f, H>`.
    pub grad: f64,
    /// Central difference of `euclid_grad` along `V` vs `hvp(X, V)`.
    pub hvp: f64,
    /// `<U, hvp(X, V)>` vs `<V, hvp(X, U)>`.
    pub symmetry: f64,
}

/// Compares the analytic derivatives of `prob` with central differences at
/// `points` random points near `St(p, n)`.
pub fn check_derivatives<P: Problem + ?Sized, R: Rng + ?Sized>(
    prob: &P,
    rng: &mut R,
    points: usize,
) -> DerivativeReport {
    let (n, p) = prob.dims();
    let h = FD_STEP;
    let mut rep = DerivativeReport::default();
    for _ in 0..points {
        let x = haar_stiefel(rng, n, p) + gaussian(rng, n, p) * 0.05;
        let dir = gaussian(rng, n, p);
        let dir = &dir / dir.norm();
        let fd = (prob.value(&(&x + &dir * h)) - prob.value(&(&x - &dir * h))) / (2.0 * h);
        let exact = inner(&prob.euclid_grad(&x), &dir);
        rep.grad = rep.grad.max(rel_err(fd, exact));

        let v = gaussian(rng, n, p);
        let fd = (prob.euclid_grad(&(&x + &v * h)) - prob.euclid_grad(&(&x - &v * h))) / (2.0 * h);
        let hv = prob.hvp(&x, &v);
        rep.hvp = rep.hvp.max((&fd - &hv).norm() / hv.norm().max(fd.norm()).max(f64::MIN_POSITIVE));

        let u = gaussian(rng, n, p);
        let uhv = inner(&u, &hv);
        let vhu = inner(&v, &prob.hvp(&x, &u));
        rep.symmetry = rep.symmetry.max(rel_err(uhv, vhu));
    }
    rep
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Objective selector used by configuration front ends.
pub enum AnyProblem {
    Procrustes(Procrustes),
    Pca(Pca),
    Ica(Ica),
}

impl Problem for AnyProblem {
    fn dims(&self) -> (usize, usize) {
        match self {
            AnyProblem::Procrustes(p) => p.dims(),
            AnyProblem::Pca(p) => p.dims(),
            AnyProblem::Ica(p) => p.dims(),
        }
    }
    fn value(&self, x: &Mat) -> f64 {
        match self {
            AnyProblem::Procrustes(p) => p.value(x),
            AnyProblem::Pca(p) => p.value(x),
            AnyProblem::Ica(p) => p.value(x),
        }
    }
    fn euclid_grad(&self, x: &Mat) -> Mat {
        match self {
            AnyProblem::Procrustes(p) => p.euclid_grad(x),
            AnyProblem::Pca(p) => p.euclid_grad(x),
            AnyProblem::Ica(p) => p.euclid_grad(x),
        }
    }
    fn hvp(&self, x: &Mat, v: &Mat) -> Mat {
        match self {
            AnyProblem::Procrustes(p) => p.hvp(x, v),
            AnyProblem::Pca(p) => p.hvp(x, v),
            AnyProblem::Ica(p) => p.hvp(x, v),
        }
    }
}
