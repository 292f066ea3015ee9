use serde::{Deserialize, Serialize};

use crate::error::{PasError, Result};

/// Rank-transformed pairs on the open unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoObservations {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl PseudoObservations {
    /// `u_i = rank(x_i) / (m + 1)`, with tied values sharing their average rank.
    pub fn from_samples(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(PasError::Domain(format!(
                "sample lengths differ: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(PasError::Domain("non-finite sample".into()));
        }
        let scale = 1.0 / (x.len() as f64 + 1.0);
        let u = average_ranks(x).into_iter().map(|r| r * scale).collect();
        let v = average_ranks(y).into_iter().map(|r| r * scale).collect();
        Ok(Self { u, v })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// 1-based ranks; ties receive the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + j) as f64;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    /// Tied pairs contribute zero to the sign sum, normalised by m(m-1)/2.
    #[default]
    TauA,
    /// Normalised by the geometric mean of untied pair counts.
    TauB,
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[1] == w[0] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` ascending, returning the number of inversions removed.
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's rank correlation in O(m log m).
pub fn kendall_tau(x: &[f64], y: &[f64], policy: TiePolicy) -> Result<f64> {
    let m = x.len();
    if m != y.len() {
        return Err(PasError::Domain("sample lengths differ".into()));
    }
    if m < 2 {
        return Err(PasError::InsufficientData { needed: 2, got: m });
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = (m as u64) * (m as u64 - 1) / 2;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&xs);
    let mut n3 = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[1] == w[0] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut ys, &mut Vec::with_capacity(m));
    let n2 = tied_pairs(&ys);

    let numer = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let tau = match policy {
        TiePolicy::TauA => numer / n0 as f64,
        TiePolicy::TauB => {
            let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
            if denom == 0.0 {
                0.0
            } else {
                numer / denom
            }
        }
    };
    Ok(tau.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(x: &[f64], y: &[f64]) -> f64 {
        let m = x.len();
        let mut s = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                s += ((x[i] - x[j]) * (y[i] - y[j])).signum()
                    * ((x[i] - x[j]) * (y[i] - y[j]) != 0.0) as i32 as f64;
            }
        }
        2.0 * s / (m * (m - 1)) as f64
    }

    #[test]
    fn matches_pairwise_definition_with_ties() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37) % 23) as f64).collect();
        let y: Vec<f64> = (0..200)
            .map(|i| ((i * 11) % 17) as f64 + 0.1 * (i % 3) as f64)
            .collect();
        let fast = kendall_tau(&x, &y, TiePolicy::TauA).unwrap();
        assert!((fast - brute(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn extremes() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert_eq!(kendall_tau(&x, &x, TiePolicy::TauA).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &rev, TiePolicy::TauA).unwrap(), -1.0);
        assert!(kendall_tau(&x[..1], &x[..1], TiePolicy::TauA).is_err());
    }

    #[test]
    fn tau_b_reaches_one_under_ties() {
        let x = [1.0, 1.0, 2.0, 3.0];
        let tb = kendall_tau(&x, &x, TiePolicy::TauB).unwrap();
        let ta = kendall_tau(&x, &x, TiePolicy::TauA).unwrap();
        assert!((tb - 1.0).abs() < 1e-15);
        assert!(ta < 1.0);
    }

    #[test]
    fn pseudo_observations_are_interior() {
        let p =
            PseudoObservations::from_samples(&[3.0, 1.0, 2.0, 2.0], &[0.0, 5.0, 1.0, 9.0]).unwrap();
        assert_eq!(p.u, vec![0.8, 0.2, 0.5, 0.5]);
        assert!(p.v.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
