use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{PasError, Result};

/// Rank-based probability-of-exceedance distribution per wave encounter.
///
/// The k-th largest value (1-based) carries PoE `k / n_w`, so `poe` ascends
/// while `values` descend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceDistribution {
    pub poe: Vec<f64>,
    pub values: Vec<f64>,
    pub n_w: u64,
}

impl ExceedanceDistribution {
    /// Builds the distribution from unordered peak magnitudes.
    pub fn from_values(values: &[f64], n_w: u64) -> Result<Self> {
        let mut sorted = values.to_vec();
        if sorted.iter().any(|v| !v.is_finite()) {
            return Err(PasError::Domain("non-finite peak value".into()));
        }
        sorted.sort_by(|a, b| b.total_cmp(a));
        Self::from_sorted_desc(sorted, n_w)
    }

    /// Builds the distribution from values already sorted in descending order.
    pub fn from_sorted_desc(values: Vec<f64>, n_w: u64) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(PasError::InsufficientData { needed: 1, got: 0 });
        }
        if n as u64 > n_w {
            return Err(PasError::Domain(format!(
                "{n} peaks exceed the encounter count {n_w}; PoE would exceed one"
            )));
        }
        let poe = (1..=n).map(|k| k as f64 / n_w as f64).collect();
        Ok(Self { poe, values, n_w })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at a PoE, interpolated linearly in ln(PoE).
    pub fn value_at_poe(&self, p: f64) -> Result<f64> {
        interp_ln_poe(&self.poe, &self.values, p)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("poe,value\n");
        for (p, v) in self.poe.iter().zip(&self.values) {
            let _ = writeln!(out, "{p},{v}");
        }
        out
    }
}

/// Interpolates `values` at PoE `p` linearly in ln(PoE). `poe` must ascend.
pub fn interp_ln_poe(poe: &[f64], values: &[f64], p: f64) -> Result<f64> {
    let n = poe.len();
    if n == 0 || !(p > 0.0) || p < poe[0] || p > poe[n - 1] {
        return Err(PasError::Extrapolation {
            poe: p,
            lo: poe.first().copied().unwrap_or(f64::NAN),
            hi: poe.last().copied().unwrap_or(f64::NAN),
        });
    }
    let k = poe.partition_point(|&x| x < p);
    if poe[k] == p {
        return Ok(values[k]);
    }
    let (p0, p1) = (poe[k - 1], poe[k]);
    let t = (p.ln() - p0.ln()) / (p1.ln() - p0.ln());
    Ok(values[k - 1] + t * (values[k] - values[k - 1]))
}

/// Most probable maximum: the value whose per-encounter PoE equals `pexp`.
pub fn mpm_from_distribution(dist: &ExceedanceDistribution, pexp: f64) -> Result<f64> {
    dist.value_at_poe(pexp)
}

/// Per-encounter PoE for the `q` quantile of the extreme over an exposure of
/// `n_peaks / m_events` encounters. `q = 1/e` approximately recovers the MPM
/// level. Higher quantiles need long low-fidelity records to converge and
/// should be treated as experimental.
pub fn quantile_poe(q: f64, m_events: f64, n_peaks: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(PasError::Domain(format!(
            "quantile must lie in (0, 1), got {q}"
        )));
    }
    Ok(-(m_events / n_peaks * q.ln()).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definitional_poe() {
        let d = ExceedanceDistribution::from_values(&[3.0, 1.0, 5.0, 2.0, 4.0], 10).unwrap();
        assert_eq!(d.poe, vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(d.values, vec![5.0, 4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn single_peak_and_rejections() {
        let d = ExceedanceDistribution::from_values(&[7.0], 40).unwrap();
        assert_eq!(d.poe, vec![1.0 / 40.0]);
        assert!(ExceedanceDistribution::from_values(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(ExceedanceDistribution::from_values(&[], 2).is_err());
    }

    #[test]
    fn exact_point_and_log_interpolation() {
        let d = ExceedanceDistribution::from_values(&[4.0, 2.0], 10).unwrap();
        assert_eq!(d.value_at_poe(0.1).unwrap(), 4.0);
        // geometric midpoint of 0.1 and 0.2 is halfway in ln(PoE)
        let mid = (0.1f64 * 0.2).sqrt();
        assert!((d.value_at_poe(mid).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(
            d.value_at_poe(0.05),
            Err(PasError::Extrapolation { .. })
        ));
        assert!(d.value_at_poe(0.3).is_err());
    }

    #[test]
    fn quantile_poe_examples() {
        assert!((quantile_poe(0.9, 1.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(quantile_poe(1.0 - 1e-12, 1.0, 1.0).unwrap() < 1e-11);
        let pexp = 50.0 / 16364.0;
        let pq = quantile_poe((-1f64).exp(), 50.0, 16364.0).unwrap();
        assert!(((pq - pexp) / pexp).abs() < pexp);
        assert!(quantile_poe(1.0, 1.0, 1.0).is_err());
    }
}
