use crate::error::{Error, Result};
use crate::fields::Problem;
use crate::linalg::Mat;

/// `A, B` in `R^{N x d}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcrustesData {
    pub a: Mat,
    pub b: Mat,
}

impl ProcrustesData {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        if a.shape() != b.shape() {
            return Err(Error::ShapeMismatch {
                expected: a.shape(),
                found: b.shape(),
            });
        }
        let (rows, d) = a.shape();
        if d == 0 || rows < d {
            return Err(Error::InvalidDimensions(format!(
                "Procrustes data must be N x d with N >= d >= 1, got {rows} x {d}"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn samples(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }
}

/// `f(X) = 1/(2N) ||A X - B||_F^2` over `St(d, d)`.
#[derive(Clone, Debug)]
pub struct Procrustes {
    data: ProcrustesData,
    /// `A^T A / N`
    ata: Mat,
    /// `A^T B / N`
    atb: Mat,
}

impl Procrustes {
    pub fn new(data: ProcrustesData) -> Result<Self> {
        let scale = 1.0 / data.samples() as f64;
        let ata = data.a.tr_mul(&data.a) * scale;
        let atb = data.a.tr_mul(&data.b) * scale;
        Ok(Self { data, ata, atb })
    }

    pub fn data(&self) -> &ProcrustesData {
        &self.data
    }
}

impl Problem for Procrustes {
    fn dims(&self) -> (usize, usize) {
        (self.data.dim(), self.data.dim())
    }

    fn value(&self, x: &Mat) -> f64 {
        let r = &self.data.a * x - &self.data.b;
        0.5 * r.norm_squared() / self.data.samples() as f64
    }

    fn euclid_grad(&self, x: &Mat) -> Mat {
        &self.ata * x - &self.atb
    }

    fn hvp(&self, _x: &Mat, v: &Mat) -> Mat {
        &self.ata * v
    }
}
