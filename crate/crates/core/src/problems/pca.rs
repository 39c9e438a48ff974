use crate::error::{Error, Result};
use crate::fields::Problem;
use crate::linalg::Mat;

/// Feature count up to which the `n x n` covariance is formed explicitly.
pub const DENSE_COVARIANCE_LIMIT: usize = 2000;

/// Data matrix `A` in `R^{N x n}` and the target rank `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaData {
    pub a: Mat,
    pub p: usize,
}

impl PcaData {
    pub fn new(a: Mat, p: usize) -> Result<Self> {
        let (rows, n) = a.shape();
        if p == 0 || p > n || rows < p {
            return Err(Error::InvalidDimensions(format!(
                "PCA needs 1 <= p <= n and N >= p, got N = {rows}, n = {n}, p = {p}"
            )));
        }
        Ok(Self { a, p })
    }

    pub fn samples(&self) -> usize {
        self.a.nrows()
    }

    pub fn features(&self) -> usize {
        self.a.ncols()
    }
}

/// `f(X) = -(1/N) tr(X^T A^T A X)` over `St(p, n)`.
#[derive(Clone, Debug)]
pub struct Pca {
    data: PcaData,
    /// `A^T A / N` when `n <= DENSE_COVARIANCE_LIMIT`.
    cov: Option<Mat>,
}

impl Pca {
    pub fn new(data: PcaData) -> Result<Self> {
        let cov = (data.features() <= DENSE_COVARIANCE_LIMIT)
            .then(|| data.a.tr_mul(&data.a) / data.samples() as f64);
        Ok(Self { data, cov })
    }

    /// Forces the matrix-free path regardless of size.
    pub fn matrix_free(data: PcaData) -> Self {
        Self { data, cov: None }
    }

    pub fn data(&self) -> &PcaData {
        &self.data
    }

    /// `A^T A V / N`.
    fn cov_apply(&self, v: &Mat) -> Mat {
        match &self.cov {
            Some(c) => c * v,
            None => self.data.a.tr_mul(&(&self.data.a * v)) / self.data.samples() as f64,
        }
    }
}

impl Problem for Pca {
    fn dims(&self) -> (usize, usize) {
        (self.data.features(), self.data.p)
    }

    fn value(&self, x: &Mat) -> f64 {
        match &self.cov {
            Some(c) => -x.dot(&(c * x)),
            None => -(&self.data.a * x).norm_squared() / self.data.samples() as f64,
        }
    }

    fn euclid_grad(&self, x: &Mat) -> Mat {
        self.cov_apply(x) * -2.0
    }

    fn hvp(&self, _x: &Mat, v: &Mat) -> Mat {
        self.cov_apply(v) * -2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldContext;
    use crate::geometry::AmbientPoint;
    use crate::linalg::{gaussian, haar_stiefel};
    use crate::problems::{check_derivatives, synth_pca};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sorted_eigen(c: &Mat) -> (Vec<f64>, Mat) {
        let eig = c.clone().symmetric_eigen();
        let mut idx: Vec<usize> = (0..c.nrows()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = Mat::from_fn(c.nrows(), c.nrows(), |r, k| eig.eigenvectors[(r, idx[k])]);
        (vals, vecs)
    }

    #[test]
    fn top_eigenspace_is_stationary_and_optimal() {
        let data = synth_pca(400, 30, 4, 0.1, 5).unwrap();
        let prob = Pca::new(data.clone()).unwrap();
        let c = data.a.tr_mul(&data.a) / 400.0;
        let (vals, vecs) = sorted_eigen(&c);
        let top = vecs.columns(0, 4).into_owned();
        let x = AmbientPoint::new(top.clone()).unwrap();
        let g = FieldContext::new(&prob, &x).unwrap().riemannian_gradient_norm();
        assert!(g < 1e-12, "{g}");
        let bound = -vals[..4].iter().sum::<f64>();
        assert!((prob.value(&top) - bound).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let q = haar_stiefel(&mut rng, 30, 4);
            assert!(prob.value(&q) >= bound - 1e-12);
        }
    }

    #[test]
    fn spectral_gap_of_generated_covariance() {
        let data = synth_pca(600, 120, 10, 0.1, 1).unwrap();
        let c = data.a.tr_mul(&data.a) / 600.0;
        let (vals, _) = sorted_eigen(&c);
        assert!(vals[9] - vals[10] > 0.5, "{} vs {}", vals[9], vals[10]);
    }

    #[test]
    fn hvp_is_linear_and_independent_of_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prob = Pca::new(synth_pca(50, 12, 3, 0.1, 2).unwrap()).unwrap();
        let x1 = haar_stiefel(&mut rng, 12, 3);
        let x2 = gaussian(&mut rng, 12, 3);
        let (u, v) = (gaussian(&mut rng, 12, 3), gaussian(&mut rng, 12, 3));
        assert_eq!(prob.hvp(&x1, &u), prob.hvp(&x2, &u));
        let lhs = prob.hvp(&x1, &(&u * 2.0 + &v * -3.0));
        let rhs = prob.hvp(&x1, &u) * 2.0 + prob.hvp(&x1, &v) * -3.0;
        assert!((lhs - &rhs).norm() <= 1e-13 * rhs.norm());
    }

    #[test]
    fn dense_and_matrix_free_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = synth_pca(80, 15, 3, 0.1, 3).unwrap();
        let dense = Pca::new(data.clone()).unwrap();
        let free = Pca::matrix_free(data);
        let x = gaussian(&mut rng, 15, 3);
        assert!((dense.value(&x) - free.value(&x)).abs() <= 1e-12 * dense.value(&x).abs());
        let g = dense.euclid_grad(&x);
        assert!((&g - free.euclid_grad(&x)).norm() <= 1e-12 * g.norm());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let prob = Pca::new(synth_pca(100, 20, 4, 0.1, 4).unwrap()).unwrap();
        let rep = check_derivatives(&prob, &mut rng, 20);
        assert!(rep.grad <= 1e-6 && rep.hvp <= 1e-5 && rep.symmetry <= 1e-8, "{rep:?}");
    }
}
