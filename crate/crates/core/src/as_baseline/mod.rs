//! Adaptive screening (AS): the HF order statistics are assumed equal to the
//! LF ones, a Gaussian process over ln(PoE) regresses the evaluated HF values,
//! and the next event maximises the prediction-weighted proximity to `pexp`.

mod gpr;

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use gpr::{GprSurrogate, Hyper, NOISE_FLOOR};

use crate::empirical::interp_ln_poe;
use crate::engine::{nearest_unused, LfPool, Prediction, Sample, Z95};
use crate::error::{PasError, Result};

/// Size of the AS prediction grid.
pub const PREDICTION_POINTS: usize = 256;
/// Random restarts of the hyperparameter search, besides the default start.
pub const GPR_RESTARTS: usize = 4;

/// ln-uniform grid over [0.1 / n_w, 1].
pub fn prediction_grid(n_w: u64) -> Vec<f64> {
    let a = (0.1 / n_w as f64).ln();
    (0..PREDICTION_POINTS)
        .map(|i| (a - a * i as f64 / (PREDICTION_POINTS - 1) as f64).exp())
        .collect()
}

/// The largest LF event plus the event nearest `pexp`.
pub fn initial_sample(pool: &LfPool, pexp: f64) -> Result<Vec<usize>> {
    if pool.len() < 2 {
        return Err(PasError::Config("AS needs at least two LF peaks".into()));
    }
    let used: HashSet<usize> = [1].into();
    Ok(vec![1, nearest_unused(pool, &used, pexp.ln())?])
}

/// GP surrogate over `(ln d_sel, h_sel)`, evaluated on the prediction grid.
/// The random restarts are drawn from `seed` alone.
pub fn predict(pool: &LfPool, selected: &[Sample], pexp: f64, seed: u64) -> Result<Prediction> {
    let x: Vec<f64> = selected.iter().map(|s| s.poe.ln()).collect();
    let y: Vec<f64> = selected.iter().map(|s| s.hf).collect();
    let grid = prediction_grid(pool.n_w());
    let span = grid[grid.len() - 1].ln() - grid[0].ln();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gp = GprSurrogate::fit(&x, &y, span / 4.0, GPR_RESTARTS, &mut rng)?;
    let ln_grid: Vec<f64> = grid.iter().map(|p| p.ln()).collect();
    let (mean, sd) = gp.predict(&ln_grid);
    let lo: Vec<f64> = mean.iter().zip(&sd).map(|(m, s)| m - Z95 * s).collect();
    let hi: Vec<f64> = mean.iter().zip(&sd).map(|(m, s)| m + Z95 * s).collect();
    let mpm = interp_ln_poe(&grid, &mean, pexp)?;
    let mpm_u95 = interp_ln_poe(&grid, &hi, pexp)? - mpm;
    Ok(Prediction {
        poe: grid,
        mean,
        lo,
        hi,
        mpm,
        mpm_u95,
        copula: None,
        clamp_fraction: 0.0,
    })
}

/// PoE maximising `h_n * f2 / max(f2)`, where `h_n` is the prediction scaled
/// to [0, 1] and `f2` the shifted proximity `1 - (ln d - ln pexp)^2`.
pub fn mvpd_target(poe: &[f64], mean: &[f64], pexp: f64) -> f64 {
    let (lo, hi) = mean
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let f1: Vec<f64> = poe
        .iter()
        .map(|p| 1.0 - (p.ln() - pexp.ln()).powi(2))
        .collect();
    let f1_min = f1.iter().cloned().fold(f64::INFINITY, f64::min);
    let f2: Vec<f64> = f1.iter().map(|f| f - f1_min).collect();
    let f2_max = f2.iter().cloned().fold(0.0, f64::max);
    let mut best = (f64::NEG_INFINITY, poe[0]);
    for i in 0..poe.len() {
        let hn = if hi > lo {
            (mean[i] - lo) / (hi - lo)
        } else {
            1.0
        };
        let w = if f2_max > 0.0 { f2[i] / f2_max } else { 1.0 };
        let score = hn * w;
        if score > best.0 {
            best = (score, poe[i]);
        }
    }
    best.1
}

/// Next AS event: the unused pool event nearest the MVPD target.
pub fn mvpd_acquire(
    pool: &LfPool,
    used: &HashSet<usize>,
    prediction: &Prediction,
    pexp: f64,
) -> Result<usize> {
    let target = mvpd_target(&prediction.poe, &prediction.mean, pexp);
    nearest_unused(pool, used, target.ln())
}
