use serde::{Deserialize, Serialize};

use crate::empirical::interp_ln_poe;
use crate::error::Result;

/// Points on the comparison grid used by the stopping rule and by M3.
pub const COMPARISON_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub eps1: f64,
    pub eps2: f64,
    pub k1: usize,
    pub k2: usize,
}

/// ln-uniform grid over [pexp/2, 2 pexp].
pub fn comparison_grid(pexp: f64) -> Vec<f64> {
    let (a, b) = ((0.5 * pexp).ln(), (2.0 * pexp).ln());
    (0..COMPARISON_POINTS)
        .map(|i| (a + (b - a) * i as f64 / (COMPARISON_POINTS - 1) as f64).exp())
        .collect()
}

/// Values of an ascending-PoE curve on `grid`, interpolated in ln(PoE).
pub fn on_grid(poe: &[f64], values: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&p| interp_ln_poe(poe, values, p))
        .collect()
}

/// Mean absolute difference between successive grid predictions.
pub fn mean_abs_change(prev: &[f64], cur: &[f64]) -> f64 {
    prev.iter()
        .zip(cur)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / cur.len() as f64
}

/// Stopping metrics at iteration `j = e.len()`: the mean of the defined E
/// values over the last `k1` iterations, and the population COV of the MPM
/// over the last `k2` iterations.
pub fn window_metrics(e: &[Option<f64>], mpm: &[f64], k1: usize, k2: usize) -> (Option<f64>, f64) {
    let j = e.len();
    let tail_e: Vec<f64> = e[j.saturating_sub(k1)..]
        .iter()
        .flatten()
        .copied()
        .collect();
    let e_bar = if tail_e.is_empty() {
        None
    } else {
        Some(tail_e.iter().sum::<f64>() / tail_e.len() as f64)
    };
    let h = &mpm[mpm.len().saturating_sub(k2)..];
    let mu = h.iter().sum::<f64>() / h.len() as f64;
    let var = h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / h.len() as f64;
    let cov = if mu == 0.0 {
        f64::INFINITY
    } else {
        var.sqrt() / mu.abs()
    };
    (e_bar, cov)
}

impl StoppingRule {
    /// Earliest iteration at which convergence may be declared.
    pub fn min_iteration(&self) -> usize {
        self.k1.div_ceil(2)
    }

    pub fn should_stop(&self, j: usize, e_bar: Option<f64>, cov: f64) -> bool {
        j >= self.min_iteration() && e_bar.is_some_and(|e| e < self.eps1) && cov < self.eps2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_rule() {
        let rule = StoppingRule {
            eps1: 1.0,
            eps2: 1.0,
            k1: 50,
            k2: 50,
        };
        assert!(!rule.should_stop(10, Some(0.0), 0.0));
        assert!(!rule.should_stop(24, Some(0.0), 0.0));
        assert!(rule.should_stop(25, Some(0.0), 0.0));
        assert!(!rule.should_stop(30, None, 0.0));
    }

    #[test]
    fn alternating_mpm_cov() {
        let mpm: Vec<f64> = (0..40)
            .map(|i| if i % 2 == 0 { 1.2 } else { 0.8 })
            .collect();
        let e = vec![Some(0.0); 40];
        let (_, cov) = window_metrics(&e, &mpm, 50, 50);
        assert!((cov - 0.2).abs() < 1e-12);
    }

    #[test]
    fn window_uses_last_k() {
        let e: Vec<Option<f64>> = std::iter::once(None)
            .chain((1..10).map(|i| Some(i as f64)))
            .collect();
        let (e_bar, _) = window_metrics(&e, &[1.0; 10], 3, 3);
        assert_eq!(e_bar, Some(8.0));
        let (e_all, _) = window_metrics(&e, &[1.0; 10], 50, 50);
        assert_eq!(e_all, Some(5.0));
    }

    #[test]
    fn grid_spans_range() {
        let g = comparison_grid(0.004);
        assert_eq!(g.len(), COMPARISON_POINTS);
        assert!((g[0] - 0.002).abs() < 1e-15);
        assert!((g[63] - 0.008).abs() < 1e-15);
    }
}
