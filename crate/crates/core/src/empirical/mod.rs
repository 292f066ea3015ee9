//! Exceedance distributions, kernel-smoothed marginals and GP tail fits.

mod exceedance;
mod gp_tail;
mod kernel;

pub use exceedance::{interp_ln_poe, mpm_from_distribution, quantile_poe, ExceedanceDistribution};
pub use gp_tail::{fit_gp_tail, GpTailFit, DEFAULT_TOP_FRACTION, MIN_EXCEEDANCES};
pub use kernel::{
    fit_kernel_marginal, marginal_inverse, BandwidthRule, KernelMarginal, Quantile, GRID_POINTS,
    GRID_REACH,
};

use crate::error::Result;
use crate::signals::PeakSeries;

/// Exceedance distribution of a peak series over `n_w` encounters.
pub fn exceedance_from_peaks(peaks: &PeakSeries, n_w: u64) -> Result<ExceedanceDistribution> {
    ExceedanceDistribution::from_values(&peaks.values, n_w)
}
