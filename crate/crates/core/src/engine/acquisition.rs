use std::collections::HashSet;

use super::pool::LfPool;
use crate::error::{PasError, Result};

/// Rank of the unused pool event whose ln(PoE) is closest to `ln_target`.
/// Ties go to the lower PoE.
pub fn nearest_unused(pool: &LfPool, used: &HashSet<usize>, ln_target: f64) -> Result<usize> {
    let n = pool.len();
    if used.len() >= n {
        return Err(PasError::PoolExhausted { used: used.len() });
    }
    let ln_poe = |rank: usize| pool.at_rank(rank).poe.ln();
    let start = (pool.n_w() as f64 * ln_target.exp())
        .round()
        .clamp(1.0, n as f64) as usize;
    let mut best: Option<(f64, usize)> = None;
    let consider = |rank: usize, best: &mut Option<(f64, usize)>| {
        if used.contains(&rank) {
            return;
        }
        let d = (ln_poe(rank) - ln_target).abs();
        match *best {
            Some((bd, br)) if d > bd || (d == bd && rank > br) => {}
            _ => *best = Some((d, rank)),
        }
    };
    // ln(PoE) is monotone in rank, so scan outwards and stop once both
    // directions are farther than the best candidate.
    let mut lo = start;
    let mut hi = start + 1;
    loop {
        let lo_ok = lo >= 1;
        let hi_ok = hi <= n;
        if !lo_ok && !hi_ok {
            break;
        }
        if let Some((bd, _)) = best {
            let lo_far = !lo_ok || (ln_poe(lo) - ln_target).abs() > bd;
            let hi_far = !hi_ok || (ln_poe(hi) - ln_target).abs() > bd;
            if lo_far && hi_far {
                break;
            }
        }
        if lo_ok {
            consider(lo, &mut best);
            lo -= 1;
        }
        if hi_ok {
            consider(hi, &mut best);
            hi += 1;
        }
    }
    best.map(|(_, r)| r)
        .ok_or(PasError::PoolExhausted { used: used.len() })
}

/// The `m_top` largest events plus `m_total - m_top` events at uniformly
/// spaced ln(PoE) targets over the rest of the pool.
pub fn initial_sample(pool: &LfPool, m_total: usize, m_top: usize) -> Result<Vec<usize>> {
    if m_top >= m_total {
        return Err(PasError::Config(format!(
            "top count {m_top} must be below the initial total {m_total}"
        )));
    }
    let n = pool.len();
    if n < m_total {
        return Err(PasError::Config(format!(
            "the LF pool has {n} peaks, fewer than the {m_total} initial samples"
        )));
    }
    let mut ranks: Vec<usize> = (1..=m_top).collect();
    let mut used: HashSet<usize> = ranks.iter().copied().collect();
    let spread = m_total - m_top;
    let a = pool.at_rank(m_top + 1).poe.ln();
    let b = pool.at_rank(n).poe.ln();
    for i in 0..spread {
        let t = if spread == 1 {
            a
        } else {
            a + (b - a) * i as f64 / (spread - 1) as f64
        };
        let r = nearest_unused(pool, &used, t)?;
        used.insert(r);
        ranks.push(r);
    }
    Ok(ranks)
}

/// Maximum-distance target: the log-midpoint of the widest ln(PoE) gap
/// between consecutive selected samples, ties resolved to the lower PoE.
pub fn md_target(selected_poe: &[f64]) -> Result<f64> {
    let mut ln: Vec<f64> = selected_poe.iter().map(|p| p.ln()).collect();
    ln.sort_by(f64::total_cmp);
    if ln.len() < 2 {
        return Err(PasError::InsufficientData {
            needed: 2,
            got: ln.len(),
        });
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for k in 0..ln.len() - 1 {
        let gap = ln[k + 1] - ln[k];
        if gap > best.0 {
            best = (gap, k);
        }
    }
    Ok(0.5 * (ln[best.1] + ln[best.1 + 1]))
}

/// Next event by the maximum-distance rule, applied to the gaps that still
/// contain an unused pool event. A gap between adjacent ranks cannot be
/// narrowed, so it is skipped.
pub fn md_acquire(pool: &LfPool, used: &HashSet<usize>) -> Result<usize> {
    let mut ranks: Vec<usize> = used.iter().copied().collect();
    ranks.sort_unstable();
    let mut best: Option<(f64, f64)> = None;
    for w in ranks.windows(2) {
        if w[1] - w[0] < 2 {
            continue;
        }
        let (a, b) = (pool.at_rank(w[0]).poe.ln(), pool.at_rank(w[1]).poe.ln());
        if best.is_none_or(|(g, _)| b - a > g) {
            best = Some((b - a, 0.5 * (a + b)));
        }
    }
    match best {
        Some((_, target)) => nearest_unused(pool, used, target),
        // Every interior rank is taken; extend beyond the selected range.
        None => {
            let fallback: Vec<f64> = ranks.iter().map(|&r| pool.at_rank(r).poe).collect();
            nearest_unused(pool, used, md_target(&fallback).unwrap_or(0.0))
        }
    }
}
