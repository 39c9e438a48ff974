use crate::error::{Error, Result};
use crate::fields::Problem;
use crate::linalg::Mat;
use crate::parallel::{chunk_ranges, Execution};

/// Arguments beyond this magnitude give `tanh = +-1` exactly in `f64`.
const TANH_CLAMP: f64 = 30.0;

/// Whitened data `W` in `R^{N x d}`.
#[derive(Clone, Debug, PartialEq)]
pub struct IcaData {
    pub w: Mat,
}

impl IcaData {
    pub fn new(w: Mat) -> Result<Self> {
        let (rows, d) = w.shape();
        if d == 0 || rows < d {
            return Err(Error::InvalidDimensions(format!(
                "ICA data must be N x d with N >= d >= 1, got {rows} x {d}"
            )));
        }
        Ok(Self { w })
    }

    pub fn samples(&self) -> usize {
        self.w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }
}

/// `log cosh x = |x| + log((1 + e^{-2|x|}) / 2)`, stable for large `|x|`.
pub(crate) fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn clamped_tanh(x: f64) -> f64 {
    if x > TANH_CLAMP {
        1.0
    } else if x < -TANH_CLAMP {
        -1.0
    } else {
        x.tanh()
    }
}

/// `f(X) = -(1/N) sum_ij log cosh((W X)_ij)` over `St(p, d)`.
///
/// Work is split into fixed blocks of [`CHUNK_ROWS`] samples. With
/// [`Execution::Parallel`] the blocks are processed on the rayon pool and the
/// partial sums are combined in block order, so both modes give identical
/// results.
#[derive(Clone, Debug)]
pub struct Ica {
    data: IcaData,
    p: usize,
    exec: Execution,
}

/// Samples per work block; independent of the thread count.
pub const CHUNK_ROWS: usize = 512;

impl Ica {
    /// Square unmixing problem on `St(d, d)`.
    pub fn new(data: IcaData) -> Self {
        let p = data.dim();
        Self {
            data,
            p,
            exec: Execution::default(),
        }
    }

    /// Extracts `p <= d` components.
    pub fn with_components(data: IcaData, p: usize) -> Result<Self> {
        if p == 0 || p > data.dim() {
            return Err(Error::InvalidDimensions(format!(
                "component count must lie in 1..={}, got {p}",
                data.dim()
            )));
        }
        Ok(Self {
            data,
            p,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn data(&self) -> &IcaData {
        &self.data
    }

    fn scale(&self) -> f64 {
        1.0 / self.data.samples() as f64
    }

    /// Evaluates `f` on every block `(W_b, W_b X)` and returns the results in
    /// block order.
    fn blocks<T, F>(&self, x: &Mat, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&nalgebra::DMatrixView<'_, f64>, Mat) -> T + Sync + Send,
    {
        let ranges = chunk_ranges(self.data.samples(), self.data.samples().div_ceil(CHUNK_ROWS));
        self.exec.map_slice(&ranges, |r| {
            let wb = self.data.w.rows(r.start, r.len());
            let y = wb * x;
            f(&wb, y)
        })
    }

    fn sum_in_order(&self, parts: Vec<Mat>) -> Mat {
        let mut out = Mat::zeros(self.data.dim(), self.p);
        for part in parts {
            out += part;
        }
        out * -self.scale()
    }
}

impl Problem for Ica {
    fn dims(&self) -> (usize, usize) {
        (self.data.dim(), self.p)
    }

    fn value(&self, x: &Mat) -> f64 {
        let parts = self.blocks(x, |_, y| y.iter().map(|&v| log_cosh(v)).sum::<f64>());
        -self.scale() * parts.iter().sum::<f64>()
    }

    fn euclid_grad(&self, x: &Mat) -> Mat {
        let parts = self.blocks(x, |wb, y| wb.tr_mul(&y.map(clamped_tanh)));
        self.sum_in_order(parts)
    }

    fn hvp(&self, x: &Mat, v: &Mat) -> Mat {
        let parts = self.blocks(x, |wb, y| {
            let wv = wb * v;
            let weighted = y.zip_map(&wv, |a, b| {
                let t = clamped_tanh(a);
                (1.0 - t * t) * b
            });
            wb.tr_mul(&weighted)
        });
        self.sum_in_order(parts)
    }
}
