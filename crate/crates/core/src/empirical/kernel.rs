use serde::{Deserialize, Serialize};

use crate::error::{PasError, Result};
use crate::numeric::{brent_root, norm_cdf, norm_pdf, quantile_sorted, sample_std};

/// Tabulation resolution of a fitted marginal.
pub const GRID_POINTS: usize = 2049;
/// Grid extent beyond the sample hull, in bandwidths.
pub const GRID_REACH: f64 = 8.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BandwidthRule {
    /// 0.9 min(sd, IQR/1.34) m^(-1/5), floored at 1e-6 of the sample range.
    Silverman,
    Fixed(f64),
}

/// Gaussian-kernel smoothed CDF, tabulated on a monotone grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMarginal {
    samples: Vec<f64>,
    pub bandwidth: f64,
    pub support_grid: Vec<f64>,
    pub cdf: Vec<f64>,
}

/// A quantile lookup, flagged when `p` fell outside the tabulated range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantile {
    pub value: f64,
    pub clamped: bool,
}

pub fn fit_kernel_marginal(samples: &[f64], rule: BandwidthRule) -> Result<KernelMarginal> {
    KernelMarginal::fit(samples, rule)
}

pub fn marginal_inverse(m: &KernelMarginal, p: f64) -> Result<Quantile> {
    m.inverse(p)
}

impl KernelMarginal {
    pub fn fit(samples: &[f64], rule: BandwidthRule) -> Result<Self> {
        if samples.len() < 2 {
            return Err(PasError::InsufficientData {
                needed: 2,
                got: samples.len(),
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(PasError::Domain("non-finite sample".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let range = sorted[sorted.len() - 1] - sorted[0];
        if range <= 0.0 {
            return Err(PasError::DegenerateData("all samples are identical".into()));
        }
        let bandwidth = match rule {
            BandwidthRule::Fixed(h) if h > 0.0 => h,
            BandwidthRule::Fixed(h) => {
                return Err(PasError::Config(format!(
                    "bandwidth must be positive, got {h}"
                )))
            }
            BandwidthRule::Silverman => {
                let sd = sample_std(&sorted);
                let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
                let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
                (0.9 * spread * (sorted.len() as f64).powf(-0.2)).max(1e-6 * range)
            }
        };
        let lo = sorted[0] - GRID_REACH * bandwidth;
        let hi = sorted[sorted.len() - 1] + GRID_REACH * bandwidth;
        let step = (hi - lo) / (GRID_POINTS - 1) as f64;
        let support_grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + i as f64 * step).collect();
        let mut m = Self {
            samples: sorted,
            bandwidth,
            support_grid,
            cdf: Vec::new(),
        };
        m.cdf = m.support_grid.iter().map(|&x| m.cdf_exact(x)).collect();
        Ok(m)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Exact smoothed CDF.
    pub fn cdf_exact(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let s: f64 = self.samples.iter().map(|&xi| norm_cdf((x - xi) / h)).sum();
        (s / self.samples.len() as f64).clamp(0.0, 1.0)
    }

    /// Smoothed density.
    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let s: f64 = self.samples.iter().map(|&xi| norm_pdf((x - xi) / h)).sum();
        s / (self.samples.len() as f64 * h)
    }

    /// CDF from the tabulation (linear between grid nodes, exact outside).
    pub fn cdf_fast(&self, x: f64) -> f64 {
        let g = &self.support_grid;
        if x <= g[0] || x >= g[g.len() - 1] {
            return self.cdf_exact(x);
        }
        let step = g[1] - g[0];
        let i = (((x - g[0]) / step) as usize).min(g.len() - 2);
        let t = (x - g[i]) / step;
        self.cdf[i] + t * (self.cdf[i + 1] - self.cdf[i])
    }

    fn bracket(&self, p: f64) -> Option<usize> {
        let c = &self.cdf;
        if p < c[0] || p > c[c.len() - 1] {
            return None;
        }
        let k = c.partition_point(|&v| v < p);
        Some(k.clamp(1, c.len() - 1) - 1)
    }

    /// Inverse CDF solved against the exact CDF to within 1e-12 bandwidths.
    pub fn inverse(&self, p: f64) -> Result<Quantile> {
        if !(p > 0.0 && p < 1.0) {
            return Err(PasError::Domain(format!(
                "probability must lie in (0, 1), got {p}"
            )));
        }
        let Some(i) = self.bracket(p) else {
            return Ok(self.clamped(p));
        };
        let (a, b) = (self.support_grid[i], self.support_grid[i + 1]);
        let value = brent_root(|x| self.cdf_exact(x) - p, a, b, 1e-12 * self.bandwidth, 200)
            .unwrap_or_else(|_| self.lerp_inverse(i, p));
        Ok(Quantile {
            value,
            clamped: false,
        })
    }

    /// Inverse CDF by linear interpolation of the tabulation.
    pub fn inverse_fast(&self, p: f64) -> Quantile {
        match self.bracket(p) {
            Some(i) => Quantile {
                value: self.lerp_inverse(i, p),
                clamped: false,
            },
            None => self.clamped(p),
        }
    }

    fn lerp_inverse(&self, i: usize, p: f64) -> f64 {
        let (c0, c1) = (self.cdf[i], self.cdf[i + 1]);
        let (x0, x1) = (self.support_grid[i], self.support_grid[i + 1]);
        if c1 > c0 {
            x0 + (p - c0) / (c1 - c0) * (x1 - x0)
        } else {
            0.5 * (x0 + x1)
        }
    }

    fn clamped(&self, p: f64) -> Quantile {
        let g = &self.support_grid;
        let value = if p < self.cdf[0] {
            g[0]
        } else {
            g[g.len() - 1]
        };
        Quantile {
            value,
            clamped: true,
        }
    }
}
