use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::copula::Copula;
use crate::empirical::{ExceedanceDistribution, KernelMarginal};
use crate::error::{PasError, Result};
use crate::numeric::sample_std;
use crate::par::{map_indexed, ExecMode};

/// Margin keeping pseudo-observations and uniform draws off 0 and 1.
pub const UNIT_MARGIN: f64 = 1e-6;

/// z-score of the two-sided 95% band.
pub const Z95: f64 = 1.96;

/// Independent random stream for bootstrap draw `draw` of iteration `iteration`.
pub fn draw_rng(seed: u64, iteration: usize, draw: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 24) | draw as u64);
    rng
}

/// Bootstrap output with clamp bookkeeping.
#[derive(Debug, Clone)]
pub struct BootstrapDraws {
    pub draws: Vec<ExceedanceDistribution>,
    /// Fraction of the z * n draws that hit a probability clip or a marginal
    /// table end.
    pub clamp_fraction: f64,
}

/// Draws `z` HF realisations of the whole LF record through the copula.
///
/// Every LF peak is mapped to `u = F_l(l)` (clipped to the unit margin), a
/// conditional uniform `v` is drawn given `u`, and `F_h^{-1}(v)` gives one HF
/// value. Each realisation is returned as a rank-based distribution over the
/// same `n_w`. Draw `b` uses `draw_rng(seed, iteration, b)`, so the result is
/// independent of execution mode and thread count.
#[allow(clippy::too_many_arguments)]
pub fn conditional_bootstrap(
    copula: &Copula,
    lf_marginal: &KernelMarginal,
    hf_marginal: &KernelMarginal,
    l_mcs: &[f64],
    n_w: u64,
    z: usize,
    seed: u64,
    iteration: usize,
    exec: ExecMode,
) -> Result<BootstrapDraws> {
    if l_mcs.is_empty() {
        return Err(PasError::InsufficientData { needed: 1, got: 0 });
    }
    let mut u_clipped = 0usize;
    let u: Vec<f64> = l_mcs
        .iter()
        .map(|&l| {
            let p = lf_marginal.cdf_fast(l);
            let q = p.clamp(UNIT_MARGIN, 1.0 - UNIT_MARGIN);
            if q != p {
                u_clipped += 1;
            }
            q
        })
        .collect();

    let results = map_indexed(exec, z, |b| -> Result<(Vec<f64>, usize)> {
        let mut rng = draw_rng(seed, iteration, b);
        let mut values = Vec::with_capacity(u.len());
        let mut clamped = 0usize;
        for &ui in &u {
            let r = UNIT_MARGIN + (1.0 - 2.0 * UNIT_MARGIN) * rng.random::<f64>();
            let v = copula.conditional_inverse_raw(r, ui)?;
            let q = hf_marginal.inverse_fast(v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON));
            clamped += q.clamped as usize;
            values.push(q.value);
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok((values, clamped))
    });

    let mut draws = Vec::with_capacity(z);
    let mut clamped = u_clipped * z;
    for res in results {
        let (values, c) = res?;
        clamped += c;
        draws.push(ExceedanceDistribution::from_sorted_desc(values, n_w)?);
    }
    Ok(BootstrapDraws {
        draws,
        clamp_fraction: clamped as f64 / (z * l_mcs.len()) as f64,
    })
}

/// Pointwise summary of bootstrap draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: ExceedanceDistribution,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub mpm: f64,
    /// Half-width of the 95% band of the per-draw MPMs.
    pub mpm_u95: f64,
}

/// Mean distribution per rank, `mean +- 1.96 std` bands, and the MPM read
/// from the mean distribution at `pexp`.
pub fn aggregate_prediction(draws: &[ExceedanceDistribution], pexp: f64) -> Result<Aggregate> {
    if draws.len() < 2 {
        return Err(PasError::InsufficientData {
            needed: 2,
            got: draws.len(),
        });
    }
    let n = draws[0].len();
    if draws.iter().any(|d| d.len() != n || d.n_w != draws[0].n_w) {
        return Err(PasError::Domain(
            "bootstrap draws are not on a common rank grid".into(),
        ));
    }
    let mut mean = Vec::with_capacity(n);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    let mut column = vec![0.0; draws.len()];
    for k in 0..n {
        for (c, d) in column.iter_mut().zip(draws) {
            *c = d.values[k];
        }
        let m = column.iter().sum::<f64>() / column.len() as f64;
        let half = Z95 * sample_std(&column);
        mean.push(m);
        lo.push(m - half);
        hi.push(m + half);
    }
    let mean = ExceedanceDistribution {
        poe: draws[0].poe.clone(),
        values: mean,
        n_w: draws[0].n_w,
    };
    let mpm = mean.value_at_poe(pexp)?;
    let per_draw: Vec<f64> = draws
        .iter()
        .map(|d| d.value_at_poe(pexp))
        .collect::<Result<_>>()?;
    Ok(Aggregate {
        mean,
        lo,
        hi,
        mpm,
        mpm_u95: Z95 * sample_std(&per_draw),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(values: Vec<f64>) -> ExceedanceDistribution {
        ExceedanceDistribution::from_sorted_desc(values, 10).unwrap()
    }

    #[test]
    fn identical_draws_have_zero_width() {
        let d = dist(vec![5.0, 4.0, 3.0]);
        let a = aggregate_prediction(&[d.clone(), d.clone(), d], 0.2).unwrap();
        assert_eq!(a.lo, a.mean.values);
        assert_eq!(a.hi, a.mean.values);
        assert_eq!(a.mpm, 4.0);
        assert_eq!(a.mpm_u95, 0.0);
    }

    #[test]
    fn two_draw_arithmetic() {
        let a = aggregate_prediction(&[dist(vec![1.0]), dist(vec![3.0])], 0.1).unwrap();
        assert_eq!(a.mean.values[0], 2.0);
        assert!((a.hi[0] - 2.0 - 1.96 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn streams_differ_per_draw_and_iteration() {
        let x: f64 = draw_rng(1, 2, 3).random();
        let y: f64 = draw_rng(1, 2, 4).random();
        let w: f64 = draw_rng(1, 3, 3).random();
        assert!(x != y && x != w);
        assert_eq!(x, draw_rng(1, 2, 3).random::<f64>());
    }
}
