use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{gaussian, haar_stiefel, Mat};

use super::{IcaData, PcaData, ProcrustesData};

/// Relative singular-value threshold below which a direction counts as
/// numerically absent when whitening.
const RANK_TOL: f64 = 1e-12;

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `A` standard Gaussian `n x d`, `X_true` Haar on `St(d, d)`,
/// `B = A X_true + sigma Xi`. Returns the data and `X_true`.
pub fn synth_procrustes(n: usize, d: usize, sigma: f64, seed: u64) -> Result<(ProcrustesData, Mat)> {
    if d == 0 || n < d {
        return Err(Error::InvalidDimensions(format!(
            "Procrustes instance needs n >= d >= 1, got n = {n}, d = {d}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(crate::error::invalid("sigma", format!("must be nonnegative, got {sigma}")));
    }
    let mut rng = rng_for(seed);
    let a = gaussian(&mut rng, n, d);
    let x_true = haar_stiefel(&mut rng, d, d);
    let noise = gaussian(&mut rng, n, d);
    let b = &a * &x_true + noise * sigma;
    Ok((ProcrustesData::new(a, b)?, x_true))
}

/// Rows of `A` drawn i.i.d. from `N(0, U U^T + sigma I_n)` with `U` Haar on
/// `St(p, n)`: `a_i = U z_i + sqrt(sigma) xi_i`.
pub fn synth_pca(samples: usize, n: usize, p: usize, sigma: f64, seed: u64) -> Result<PcaData> {
    if p == 0 || p > n || samples < p {
        return Err(Error::InvalidDimensions(format!(
            "PCA instance needs 1 <= p <= n and N >= p, got N = {samples}, n = {n}, p = {p}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(crate::error::invalid("sigma", format!("must be nonnegative, got {sigma}")));
    }
    let mut rng = rng_for(seed);
    let u = haar_stiefel(&mut rng, n, p);
    let z = gaussian(&mut rng, samples, p);
    let xi = gaussian(&mut rng, samples, n);
    let a = z * u.transpose() + xi * sigma.sqrt();
    PcaData::new(a, p)
}

/// `d` independent unit-variance Laplace sources, mixed by a Gaussian
/// `d x d` matrix and whitened.
pub fn synth_ica(samples: usize, d: usize, seed: u64) -> Result<IcaData> {
    if d == 0 || samples <= d {
        return Err(Error::InvalidDimensions(format!(
            "ICA instance needs N > d >= 1, got N = {samples}, d = {d}"
        )));
    }
    let mut rng = rng_for(seed);
    // Laplace(0, b) has variance 2 b^2.
    let b = std::f64::consts::FRAC_1_SQRT_2;
    let sources = Mat::from_fn(samples, d, |_, _| {
        let e: f64 = rng.sample(Exp1);
        if rng.random::<bool>() {
            b * e
        } else {
            -b * e
        }
    });
    let mixing = Mat::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    whiten(&(sources * mixing.transpose()), d)
}

/// Centers the columns of `raw` and keeps the leading `keep` left singular
/// directions scaled so that `W^T W / N = I_keep`.
pub fn whiten(raw: &Mat, keep: usize) -> Result<IcaData> {
    let (samples, d) = raw.shape();
    if keep == 0 || keep > d || samples <= keep {
        return Err(Error::InvalidDimensions(format!(
            "cannot keep {keep} components of {samples} x {d} data"
        )));
    }
    let mut centered = raw.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let svd = centered.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Format("SVD did not return U".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let top = sv[order[0]];
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * top * samples.max(d) as f64).count();
    if top == 0.0 || rank < keep {
        return Err(Error::RankDeficient { rank, keep });
    }
    let scale = (samples as f64).sqrt();
    let w = Mat::from_fn(samples, keep, |i, k| u[(i, order[k])] * scale);
    IcaData::new(w)
}
