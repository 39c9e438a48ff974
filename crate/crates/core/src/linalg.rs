//! Small dense helpers shared by the geometric operators.
//!
//! Everything here works on `n x p` ambient matrices and `p x p` blocks only;
//! no `n x n` matrix is ever formed.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<f64>;

pub fn sym(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn skew(a: &Mat) -> Mat {
    (a - a.transpose()) * 0.5
}

/// `2 skew(A B^T) C`, evaluated as `A (B^T C) - B (A^T C)`.
pub fn skew_apply(a: &Mat, b: &Mat, c: &Mat) -> Mat {
    a * (b.tr_mul(c)) - b * (a.tr_mul(c))
}

/// Frobenius inner product `tr(A^T B)`.
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

pub fn identity(p: usize) -> Mat {
    DMatrix::identity(p, p)
}

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed point on `St(p, n)`: thin QR of a Gaussian matrix with the
/// signs of `diag(R)` folded back into `Q`.
pub fn haar_stiefel<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize) -> Mat {
    let qr = gaussian(rng, n, p).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random matrix with unit Frobenius norm.
pub fn unit_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    let g = gaussian(rng, rows, cols);
    let norm = g.norm();
    g / norm
}

/// Relative difference `||a - b|| / max(||a||, ||b||, floor)`.
pub fn rel_diff(a: &Mat, b: &Mat, floor: f64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(floor)
}
