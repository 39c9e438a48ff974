//! Empirical convergence-order estimates.
//!
//! Orders are slopes of `log e_{k+1}` against `log e_k`. Iterates whose error
//! has reached the roundoff floor carry no information about the rate and are
//! excluded from every fit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::driver::{sol_step, SolveResult, SolverConfig};
use crate::error::{Error, Result};
use crate::fields::{FieldContext, Problem};
use crate::geometry::AmbientPoint;
use crate::linalg::{unit_gaussian, Mat};
use crate::parallel::Execution;

/// Resampling attempts for a perturbation that leaves the safe region.
pub const MAX_RESAMPLES: usize = 10;

/// Least-squares slope of `log y` against `log x`. `None` with fewer than two
/// distinct abscissae.
pub fn fit_loglog_slope(pairs: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-24 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Consecutive pairs `(e_k, e_{k+1})` with both entries above `floor`.
pub fn consecutive_pairs(errors: &[f64], floor: f64) -> Vec<(f64, f64)> {
    errors
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| (w[0], w[1]))
        .collect()
}

/// Contraction order of an error sequence over its last `window` pairs above
/// `floor` (all pairs when `window` is `None`).
///
/// With a single usable pair the order is estimated as `log e_1 / log e_0`,
/// which equals the slope through the origin of the log-log plot and is exact
/// for `e_1 = e_0^q`.
pub fn contraction_order(errors: &[f64], floor: f64, window: Option<usize>) -> Option<f64> {
    let mut pairs = consecutive_pairs(errors, floor);
    if let Some(w) = window {
        let skip = pairs.len().saturating_sub(w);
        pairs.drain(..skip);
    }
    match pairs.len() {
        0 => None,
        1 => {
            let (e0, e1) = pairs[0];
            (e0 < 1.0).then(|| e1.ln() / e0.ln())
        }
        _ => fit_loglog_slope(&pairs),
    }
}

/// Frobenius distances of the recorded iterates to the final one.
pub fn distances_to_final(res: &SolveResult) -> Vec<f64> {
    let reference = res.point.matrix();
    res.iterates.iter().map(|x| (x - reference).norm()).collect()
}

/// Order of a recorded run, using the final iterate as the solution proxy.
pub fn run_order(res: &SolveResult, floor: f64, window: Option<usize>) -> Option<f64> {
    let mut errors = distances_to_final(res);
    errors.pop();
    contraction_order(&errors, floor, window)
}

/// Outcome of [`one_step_order`].
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct OneStepOrder {
    pub e0: Vec<f64>,
    pub e1: Vec<f64>,
    pub slope: Option<f64>,
}

/// Perturbs `x_star` by a random ambient direction of norm `e0` for each grid
/// value, takes a single step of `cfg.variant` and records the new distance
/// `e1` to `x_star`. The slope is fitted over pairs with `e1 > floor`.
pub fn one_step_order<P: Problem + ?Sized>(
    prob: &P,
    x_star: &AmbientPoint,
    grid: &[f64],
    cfg: &SolverConfig,
    seed: u64,
    floor: f64,
    exec: Execution,
) -> Result<OneStepOrder> {
    let (n, p) = x_star.shape();
    let results = exec.map(grid.len(), |i| -> Result<(f64, f64)> {
        let e0 = grid[i];
        if e0 == 0.0 {
            let step = sol_step(prob, x_star, cfg)?;
            return Ok((0.0, (step.point.matrix() - x_star.matrix()).norm()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut last_feas = f64::INFINITY;
        for _ in 0..MAX_RESAMPLES {
            let dir = unit_gaussian(&mut rng, n, p);
            let x = match AmbientPoint::new(x_star.matrix() + dir * e0) {
                Ok(x) if x.feasibility() <= cfg.eps => x,
                Ok(x) => {
                    last_feas = x.feasibility();
                    continue;
                }
                Err(_) => continue,
            };
            let step = sol_step(prob, &x, cfg)?;
            return Ok((e0, (step.point.matrix() - x_star.matrix()).norm()));
        }
        Err(Error::NotInSafeRegion {
            feas: last_feas,
            eps: cfg.eps,
        })
    });
    let pairs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let usable: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(_, e1)| e1 > floor).collect();
    Ok(OneStepOrder {
        e0: pairs.iter().map(|p| p.0).collect(),
        e1: pairs.iter().map(|p| p.1).collect(),
        slope: fit_loglog_slope(&usable),
    })
}

/// Randomized estimate of `max ||(A(X) - J(X))[V]|| / ||V||` over `probes`
/// Gaussian directions, where `A` is the second-order landing operator and
/// `J` the Jacobian of the first-order field.
pub fn operator_gap<P: Problem + ?Sized, R: Rng + ?Sized>(
    prob: &P,
    x: &AmbientPoint,
    lambda: f64,
    probes: usize,
    rng: &mut R,
) -> Result<f64> {
    let ctx = FieldContext::new(prob, x)?;
    let (n, p) = x.shape();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let v: Mat = unit_gaussian(rng, n, p);
        let diff = ctx.apply_sol_operator(&v, lambda) - ctx.apply_landing_jacobian(&v, lambda);
        worst = worst.max(diff.norm());
    }
    Ok(worst)
}
