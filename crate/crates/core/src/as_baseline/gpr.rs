use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PasError, Result};
use crate::numeric::{mean, nelder_mead, sample_std};

/// Lower bound on the noise variance, in units of the normalised targets.
pub const NOISE_FLOOR: f64 = 1e-8;

/// Squared-exponential kernel hyperparameters (normalised target units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

/// GP with a least-squares linear mean in x; the kernel models the
/// standardised residuals.
#[derive(Debug, Clone)]
pub struct GprSurrogate {
    x: Vec<f64>,
    trend: (f64, f64),
    y_scale: f64,
    pub hyper: Hyper,
    /// True when marginal-likelihood optimisation failed and the fixed
    /// fallback lengthscale was used.
    pub fallback: bool,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn kernel(h: &Hyper, a: f64, b: f64) -> f64 {
    let d = (a - b) / h.lengthscale;
    h.signal_var * (-0.5 * d * d).exp()
}

fn factor(x: &[f64], yn: &[f64], h: &Hyper) -> Option<(Cholesky<f64, Dyn>, DVector<f64>)> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        kernel(h, x[i], x[j]) + if i == j { h.noise_var } else { 0.0 }
    });
    let chol = k.cholesky()?;
    let alpha = chol.solve(&DVector::from_column_slice(yn));
    Some((chol, alpha))
}

/// Least-squares line through `(x, y)` (flat when x is constant), the
/// residual scale and the standardised residuals.
fn standardise(x: &[f64], y: &[f64]) -> ((f64, f64), f64, Vec<f64>) {
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let trend = (my - slope * mx, slope);
    let resid: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - trend.0 - trend.1 * a)
        .collect();
    let sd = if resid.len() > 1 {
        sample_std(&resid)
    } else {
        0.0
    };
    let scale = if sd > 1e-12 * (1.0 + my.abs()) {
        sd
    } else {
        1.0
    };
    let yn = resid.iter().map(|r| r / scale).collect();
    (trend, scale, yn)
}

fn neg_log_marginal(x: &[f64], yn: &[f64], h: &Hyper) -> f64 {
    let Some((chol, alpha)) = factor(x, yn, h) else {
        return f64::NAN;
    };
    let fit = 0.5 * DVector::from_column_slice(yn).dot(&alpha);
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    fit + logdet + 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

impl GprSurrogate {
    /// Fits hyperparameters by maximising the marginal likelihood from the
    /// start `(fallback_lengthscale, 1, 1e-4)` plus `restarts` random starts.
    /// Falls back to `fallback_lengthscale` when no start yields a finite
    /// optimum.
    pub fn fit<R: Rng + ?Sized>(
        x: &[f64],
        y: &[f64],
        fallback_lengthscale: f64,
        restarts: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(PasError::InsufficientData {
                needed: 2,
                got: x.len().min(y.len()),
            });
        }
        let (trend, y_scale, yn) = standardise(x, y);

        let (xmin, xmax) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let span = (xmax - xmin).max(fallback_lengthscale * 1e-3);
        let bounds = [
            ((span * 1e-2).ln(), (span * 1e2).ln()),
            (1e-4f64.ln(), 1e4f64.ln()),
            (NOISE_FLOOR.ln(), 0.0),
        ];
        let to_hyper = |p: &[f64]| Hyper {
            lengthscale: p[0].exp(),
            signal_var: p[1].exp(),
            noise_var: p[2].exp(),
        };
        let objective = |p: &[f64]| {
            if p.iter().zip(&bounds).any(|(v, (lo, hi))| v < lo || v > hi) {
                return f64::NAN;
            }
            neg_log_marginal(x, &yn, &to_hyper(p))
        };
        let default_start = [
            fallback_lengthscale.ln().clamp(bounds[0].0, bounds[0].1),
            0.0,
            1e-4f64.ln(),
        ];
        let mut starts = vec![default_start.to_vec()];
        for _ in 0..restarts {
            starts.push(
                bounds
                    .iter()
                    .map(|(lo, hi)| rng.random_range(*lo..*hi))
                    .collect(),
            );
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for s in &starts {
            let m = nelder_mead(objective, s, 0.5, 1e-7, 200);
            if m.value.is_finite() && best.as_ref().is_none_or(|(v, _)| m.value < *v) {
                best = Some((m.value, m.x));
            }
        }
        let (hyper, fallback) = match best {
            Some((_, p)) => (to_hyper(&p), false),
            None => (
                Hyper {
                    lengthscale: fallback_lengthscale,
                    signal_var: 1.0,
                    noise_var: NOISE_FLOOR,
                },
                true,
            ),
        };
        Self::with_hyper_scaled(x, &yn, trend, y_scale, hyper, fallback)
    }

    /// Conditions the GP on `(x, y)` with fixed hyperparameters.
    pub fn with_hyper(x: &[f64], y: &[f64], hyper: Hyper) -> Result<Self> {
        let (trend, y_scale, yn) = standardise(x, y);
        Self::with_hyper_scaled(x, &yn, trend, y_scale, hyper, false)
    }

    fn with_hyper_scaled(
        x: &[f64],
        yn: &[f64],
        trend: (f64, f64),
        y_scale: f64,
        hyper: Hyper,
        fallback: bool,
    ) -> Result<Self> {
        let (chol, alpha) = factor(x, yn, &hyper).ok_or_else(|| {
            PasError::FitFailure(format!(
                "GP covariance is not positive definite for {hyper:?}"
            ))
        })?;
        Ok(Self {
            x: x.to_vec(),
            trend,
            y_scale,
            hyper,
            fallback,
            chol,
            alpha,
        })
    }

    /// Posterior mean and standard deviation of the latent function.
    pub fn predict(&self, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut means = Vec::with_capacity(xs.len());
        let mut sds = Vec::with_capacity(xs.len());
        for &q in xs {
            let k = DVector::from_iterator(
                self.x.len(),
                self.x.iter().map(|&xi| kernel(&self.hyper, q, xi)),
            );
            let m = k.dot(&self.alpha);
            let v = self
                .chol
                .l_dirty()
                .solve_lower_triangular(&k)
                .unwrap_or_else(|| k.clone());
            let var = (self.hyper.signal_var - v.dot(&v)).max(0.0);
            means.push(self.trend.0 + self.trend.1 * q + self.y_scale * m);
            sds.push(self.y_scale * var.sqrt());
        }
        (means, sds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interpolates_noise_free_data() {
        let x: Vec<f64> = (0..8).map(|i| -9.0 + i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 5.0 - 0.3 * v + 0.01 * v * v).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GprSurrogate::fit(&x, &y, 2.0, 5, &mut rng).unwrap();
        assert!(!g.fallback);
        let (m, s) = g.predict(&x);
        for i in 0..x.len() {
            assert!((m[i] - y[i]).abs() < 1e-3, "{} vs {}", m[i], y[i]);
            assert!(s[i] >= 0.0);
        }
        let exact = GprSurrogate::with_hyper(
            &x,
            &y,
            Hyper {
                lengthscale: 1.0,
                signal_var: 1.0,
                noise_var: NOISE_FLOOR,
            },
        )
        .unwrap();
        let (m, _) = exact.predict(&x);
        for i in 0..x.len() {
            assert!((m[i] - y[i]).abs() < 1e-6, "{} vs {}", m[i], y[i]);
        }
    }

    #[test]
    fn variance_grows_away_from_data() {
        let g = GprSurrogate::with_hyper(
            &[0.0, 1.0],
            &[1.0, 2.0],
            Hyper {
                lengthscale: 1.0,
                signal_var: 1.0,
                noise_var: NOISE_FLOOR,
            },
        )
        .unwrap();
        let (_, s) = g.predict(&[0.5, 5.0]);
        assert!(s[1] > s[0]);
    }
}
