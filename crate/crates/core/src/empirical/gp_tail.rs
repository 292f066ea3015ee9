//! Generalised Pareto fit to the upper fraction of a peak sample.

use serde::{Deserialize, Serialize};

use crate::error::{PasError, Result};
use crate::numeric::{mean, nelder_mead, quantile_sorted};

pub const DEFAULT_TOP_FRACTION: f64 = 0.30;
pub const MIN_EXCEEDANCES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpTailFit {
    pub threshold: f64,
    pub shape: f64,
    pub scale: f64,
    pub n_exceed: usize,
}

impl GpTailFit {
    /// Value exceeded with per-encounter probability `poe`. Only valid in the
    /// fitted tail, i.e. for `poe <= n_exceed / n_w`; at that level the
    /// quantile equals the threshold.
    pub fn quantile(&self, poe: f64, n_w: u64) -> Result<f64> {
        let zeta = self.n_exceed as f64 / n_w as f64;
        if !(poe > 0.0) || poe > zeta {
            return Err(PasError::Domain(format!(
                "PoE {poe} is outside the fitted tail (0, {zeta}]"
            )));
        }
        let ratio = poe / zeta;
        let y = if self.shape.abs() < 1e-12 {
            -self.scale * ratio.ln()
        } else {
            self.scale / self.shape * (ratio.powf(-self.shape) - 1.0)
        };
        Ok(self.threshold + y)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Negative log-likelihood of GP exceedances; NaN outside the support.
fn gp_nll(y: &[f64], shape: f64, scale: f64) -> f64 {
    if !(scale > 0.0) {
        return f64::NAN;
    }
    let n = y.len() as f64;
    if shape.abs() < 1e-9 {
        return n * scale.ln() + y.iter().sum::<f64>() / scale;
    }
    let mut acc = 0.0;
    for &yi in y {
        let t = 1.0 + shape * yi / scale;
        if t <= 0.0 {
            return f64::NAN;
        }
        acc += t.ln();
    }
    n * scale.ln() + (1.0 + 1.0 / shape) * acc
}

/// Profile log-likelihood in theta = shape/scale: shape(theta) is the mean
/// of ln(1 + theta y) and scale = shape/theta.
fn profile(y: &[f64], theta: f64) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let ymax = y.iter().cloned().fold(0.0, f64::max);
    if (theta * ymax).abs() < 1e-10 {
        let s = mean(y);
        return (-n * (s.ln() + 1.0), 0.0, s);
    }
    let shape = y.iter().map(|&yi| (theta * yi).ln_1p()).sum::<f64>() / n;
    let scale = shape / theta;
    (-n * (scale.ln() + shape + 1.0), shape, scale)
}

fn fit_profile(y: &[f64]) -> Result<(f64, f64)> {
    let ymax = y.iter().cloned().fold(0.0, f64::max);
    // theta * ymax = e^s - 1 spans the admissible range (-1, inf).
    let to_theta = |s: f64| s.exp_m1() / ymax;
    let obj = |s: f64| profile(y, to_theta(s)).0;
    let grid: Vec<f64> = (0..=400).map(|i| -30.0 + i as f64 * 0.1).collect();
    let (mut best_i, mut best_v) = (0, f64::NEG_INFINITY);
    for (i, &s) in grid.iter().enumerate() {
        let v = obj(s);
        if v.is_finite() && v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    if !best_v.is_finite() {
        return Err(PasError::FitFailure(
            "profile likelihood is not finite anywhere".into(),
        ));
    }
    let (mut a, mut b) = (
        grid[best_i.saturating_sub(1)],
        grid[(best_i + 1).min(grid.len() - 1)],
    );
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if obj(c) > obj(d) {
            b = d;
        } else {
            a = c;
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    let (_, shape, scale) = profile(y, to_theta(0.5 * (a + b)));
    Ok((shape, scale))
}

/// Fits a GP tail to the `top_fraction` largest peaks by maximum likelihood,
/// falling back to the profile likelihood for strongly bounded tails
/// (shape < -0.5) or when the direct optimiser does not converge.
pub fn fit_gp_tail(peaks: &[f64], top_fraction: f64) -> Result<GpTailFit> {
    if !(top_fraction > 0.0 && top_fraction < 1.0) {
        return Err(PasError::Config(format!(
            "top fraction must lie in (0, 1) so the threshold leaves a bulk, got {top_fraction}"
        )));
    }
    let mut sorted = peaks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold = if sorted.is_empty() {
        0.0
    } else {
        quantile_sorted(&sorted, 1.0 - top_fraction)
    };
    let y: Vec<f64> = sorted
        .iter()
        .filter(|&&v| v > threshold)
        .map(|v| v - threshold)
        .collect();
    if y.len() < MIN_EXCEEDANCES {
        return Err(PasError::InsufficientData {
            needed: MIN_EXCEEDANCES,
            got: y.len(),
        });
    }
    // Moment estimates as the starting point.
    let m = mean(&y);
    let var = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
    let ratio = m * m / var;
    let shape0 = (0.5 * (1.0 - ratio)).clamp(-0.45, 0.9);
    let scale0 = (0.5 * m * (ratio + 1.0)).max(1e-12);

    let nm = nelder_mead(
        |p| gp_nll(&y, p[0], p[1].exp()),
        &[shape0, scale0.ln()],
        0.1,
        1e-13,
        4000,
    );
    let (shape, scale) = if nm.converged && nm.value.is_finite() && nm.x[0] >= -0.5 {
        (nm.x[0], nm.x[1].exp())
    } else {
        let (s, sc) = fit_profile(&y)?;
        let direct = gp_nll(&y, nm.x[0], nm.x[1].exp());
        let prof = gp_nll(&y, s, sc);
        if direct.is_finite() && (!prof.is_finite() || direct < prof) && nm.converged {
            (nm.x[0], nm.x[1].exp())
        } else if prof.is_finite() {
            (s, sc)
        } else {
            return Err(PasError::FitFailure(format!(
                "GP likelihood did not converge: direct nll={direct}, profile nll={prof}, \
                 start=({shape0}, {scale0}), iterations={}",
                nm.iterations
            )));
        }
    };
    Ok(GpTailFit {
        threshold,
        shape,
        scale,
        n_exceed: y.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gp_draws(shape: f64, scale: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if shape == 0.0 {
                    -scale * (1.0 - u).ln()
                } else {
                    scale / shape * ((1.0 - u).powf(-shape) - 1.0)
                }
            })
            .collect()
    }

    #[test]
    fn rejects_full_fraction_and_small_samples() {
        assert!(matches!(
            fit_gp_tail(&[1.0; 100], 1.0),
            Err(PasError::Config(_))
        ));
        let few: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(matches!(
            fit_gp_tail(&few, 0.3),
            Err(PasError::InsufficientData { .. })
        ));
    }

    #[test]
    fn threshold_quantile_is_threshold() {
        let mut peaks: Vec<f64> = (0..700).map(|i| i as f64 / 700.0).collect();
        peaks.extend(gp_draws(0.1, 1.0, 300, 4).iter().map(|y| 1.0 + y));
        let fit = fit_gp_tail(&peaks, 0.3).unwrap();
        let n_w = 2000;
        let zeta = fit.n_exceed as f64 / n_w as f64;
        assert!((fit.quantile(zeta, n_w).unwrap() - fit.threshold).abs() < 1e-12);
        assert!(fit.quantile(zeta * 1.01, n_w).is_err());
        assert!(fit.quantile(zeta * 0.01, n_w).unwrap() > fit.threshold);
    }

    #[test]
    fn bounded_tail_uses_profile_fallback() {
        // shape -0.8: strongly bounded support
        let y = gp_draws(-0.8, 1.0, 2000, 11);
        let mut peaks: Vec<f64> = (0..4700).map(|i| -1.0 - i as f64 * 1e-3).collect();
        peaks.extend(y.iter().map(|v| v + 0.0));
        let fit = fit_gp_tail(&peaks, 0.3).unwrap();
        assert!(fit.shape < -0.5, "{fit:?}");
        assert!(fit.scale > 0.0);
    }

    #[test]
    fn json_record() {
        let fit = GpTailFit {
            threshold: 1.0,
            shape: 0.2,
            scale: 0.5,
            n_exceed: 30,
        };
        assert_eq!(
            fit.to_json().unwrap(),
            r#"{"threshold":1.0,"shape":0.2,"scale":0.5,"n_exceed":30}"#
        );
    }
}
