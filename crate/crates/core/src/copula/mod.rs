//! Bivariate one-parameter copulas: Gaussian, Frank, Clayton and Gumbel.
//!
//! Parameters are obtained from Kendall's tau by inverting each family's
//! analytic tau relation. All evaluations are carried out in log space so the
//! near-comonotone fits produced by strongly dependent data stay finite.

mod kendall;
mod special;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PasError, Result};
use crate::numeric::{brent_root, log_add_exp, norm_cdf, norm_ppf, softplus};

pub use kendall::{average_ranks, kendall_tau, PseudoObservations, TiePolicy};
pub use special::{bivariate_normal_cdf, debye1, frank_tau};

/// Largest |tau| used when fitting. Perfectly concordant samples are mapped to
/// a near-comonotone copula instead of a degenerate one.
pub const TAU_LIMIT: f64 = 0.995;

/// Floor applied to densities before taking logs in the likelihood.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Candidate families, in tie-break order for selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Frank,
    Clayton,
    Gumbel,
}

pub const FAMILIES: [Family; 4] = [
    Family::Gaussian,
    Family::Frank,
    Family::Clayton,
    Family::Gumbel,
];

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Frank => "frank",
            Family::Clayton => "clayton",
            Family::Gumbel => "gumbel",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = PasError;

    fn from_str(s: &str) -> Result<Self> {
        FAMILIES
            .into_iter()
            .find(|f| f.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| PasError::Parse(format!("unknown copula family '{s}'")))
    }
}

/// A parametrised copula. `param` is rho for the Gaussian family and theta
/// otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Copula {
    pub family: Family,
    pub param: f64,
    pub tau: f64,
}

/// A copula together with its log-likelihood on the data it was fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaFit {
    #[serde(flatten)]
    pub copula: Copula,
    pub loglik: f64,
}

/// Copula whose parameter reproduces Kendall's `tau`.
pub fn fit_by_tau(family: Family, tau: f64) -> Result<Copula> {
    Copula::from_tau(family, tau)
}

impl Copula {
    pub fn from_tau(family: Family, tau: f64) -> Result<Self> {
        if !(tau.abs() < 1.0) {
            return Err(PasError::Domain(format!(
                "Kendall tau must lie in (-1, 1), got {tau}"
            )));
        }
        let incompatible = || PasError::FamilyIncompatible { family, tau };
        let param = match family {
            Family::Gaussian => (0.5 * std::f64::consts::PI * tau).sin(),
            Family::Clayton if tau > 0.0 => 2.0 * tau / (1.0 - tau),
            Family::Gumbel if tau > 0.0 => 1.0 / (1.0 - tau),
            Family::Clayton | Family::Gumbel => return Err(incompatible()),
            Family::Frank => {
                if tau.abs() < 1e-12 {
                    return Err(incompatible());
                }
                let t = tau.abs();
                let lo = 9.0 * t;
                let mut hi = 4.0 / (1.0 - t) + 10.0;
                while frank_tau(hi) < t {
                    hi *= 2.0;
                }
                let theta = brent_root(|th| frank_tau(th) - t, lo, hi, 1e-14 * hi, 300)?;
                theta.copysign(tau)
            }
        };
        Ok(Self { family, param, tau })
    }

    pub fn from_param(family: Family, param: f64) -> Result<Self> {
        let bad =
            |what: &str| PasError::Domain(format!("{family} parameter {param} outside {what}"));
        let tau = match family {
            Family::Gaussian if param.abs() < 1.0 => 2.0 / std::f64::consts::PI * param.asin(),
            Family::Gaussian => return Err(bad("(-1, 1)")),
            Family::Clayton if param > 0.0 && param.is_finite() => param / (param + 2.0),
            Family::Clayton => return Err(bad("(0, inf)")),
            Family::Gumbel if param >= 1.0 && param.is_finite() => 1.0 - 1.0 / param,
            Family::Gumbel => return Err(bad("[1, inf)")),
            Family::Frank if param != 0.0 && param.is_finite() => frank_tau(param),
            Family::Frank => return Err(bad("nonzero reals")),
        };
        Ok(Self { family, param, tau })
    }

    /// Lower tail dependence coefficient.
    pub fn lower_tail(&self) -> f64 {
        match self.family {
            Family::Clayton => 2f64.powf(-1.0 / self.param),
            _ => 0.0,
        }
    }

    /// Upper tail dependence coefficient.
    pub fn upper_tail(&self) -> f64 {
        match self.family {
            Family::Gumbel => 2.0 - 2f64.powf(1.0 / self.param),
            _ => 0.0,
        }
    }

    /// Joint distribution function on the closed unit square.
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0));
        if u == 0.0 || v == 0.0 {
            return 0.0;
        }
        if u == 1.0 {
            return v;
        }
        if v == 1.0 {
            return u;
        }
        let th = self.param;
        let c = match self.family {
            Family::Gaussian => bivariate_normal_cdf(norm_ppf(u), norm_ppf(v), th),
            Family::Clayton => (-clayton_ln_s(th, u, v) / th).exp(),
            Family::Gumbel => (-gumbel_a(th, -u.ln(), -v.ln())).exp(),
            Family::Frank if th > 0.0 => frank_cdf(th, u, v),
            Family::Frank => u - frank_cdf(-th, u, 1.0 - v),
        };
        c.clamp((u + v - 1.0).max(0.0), u.min(v))
    }

    /// Conditional distribution `P(V <= v | U = u)`, i.e. dC/du.
    pub fn conditional_cdf(&self, v: f64, u: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        let th = self.param;
        let h = match self.family {
            Family::Gaussian => norm_cdf((norm_ppf(v) - th * norm_ppf(u)) / (1.0 - th * th).sqrt()),
            Family::Clayton => {
                ((-th - 1.0) * u.ln() - (1.0 / th + 1.0) * clayton_ln_s(th, u, v)).exp()
            }
            Family::Gumbel => {
                let x = -u.ln();
                let a = gumbel_a(th, x, -v.ln());
                (-a + (1.0 - th) * a.ln() + (th - 1.0) * x.ln() + x).exp()
            }
            Family::Frank if th > 0.0 => frank_h(th, u, v),
            Family::Frank => 1.0 - frank_h(-th, u, 1.0 - v),
        };
        h.clamp(0.0, 1.0)
    }

    /// Log density; may be very negative near corners but never NaN for
    /// interior arguments.
    pub fn ln_density(&self, u: f64, v: f64) -> f64 {
        let th = self.param;
        match self.family {
            Family::Gaussian => {
                let (x, y) = (norm_ppf(u), norm_ppf(v));
                let one_m = (1.0 - th) * (1.0 + th);
                -0.5 * one_m.ln() - (th * th * (x * x + y * y) - 2.0 * th * x * y) / (2.0 * one_m)
            }
            Family::Clayton => {
                (1.0 + th).ln() + (-th - 1.0) * (u.ln() + v.ln())
                    - (1.0 / th + 2.0) * clayton_ln_s(th, u, v)
            }
            Family::Gumbel => {
                let (x, y) = (-u.ln(), -v.ln());
                let a = gumbel_a(th, x, y);
                -a + x
                    + y
                    + (th - 1.0) * (x.ln() + y.ln())
                    + (1.0 - 2.0 * th) * a.ln()
                    + (a + th - 1.0).ln()
            }
            Family::Frank if th > 0.0 => frank_ln_density(th, u, v),
            Family::Frank => frank_ln_density(-th, u, 1.0 - v),
        }
    }

    pub fn density(&self, u: f64, v: f64) -> f64 {
        self.ln_density(u, v).exp()
    }

    /// Sum of floored log densities over the pseudo-observations.
    pub fn log_likelihood(&self, obs: &PseudoObservations) -> f64 {
        obs.u
            .iter()
            .zip(&obs.v)
            .map(|(&u, &v)| {
                let l = self.ln_density(u, v);
                if l.is_finite() {
                    l.max(DENSITY_FLOOR.ln())
                } else if l == f64::INFINITY {
                    l
                } else {
                    DENSITY_FLOOR.ln()
                }
            })
            .sum()
    }

    /// Solves `conditional_cdf(v, u) = r` for v.
    pub fn conditional_inverse(&self, r: f64, u: f64) -> Result<f64> {
        let v = self.conditional_inverse_raw(r, u)?;
        Ok(self.polish(r, u, v))
    }

    /// Closed-form (or bracketed) inverse without the final Newton polish;
    /// accurate to a few ulps away from the corners of the unit square.
    pub fn conditional_inverse_raw(&self, r: f64, u: f64) -> Result<f64> {
        if !(r > 0.0 && r < 1.0 && u > 0.0 && u < 1.0) {
            return Err(PasError::Domain(format!(
                "conditional inverse needs r, u in (0, 1), got r={r}, u={u}"
            )));
        }
        let th = self.param;
        let v = match self.family {
            Family::Gaussian => norm_cdf(th * norm_ppf(u) + (1.0 - th * th).sqrt() * norm_ppf(r)),
            Family::Clayton => {
                let a = -th * u.ln();
                let c = -th / (1.0 + th) * r.ln();
                let ln_x = a + c + (-(-c).exp_m1()).ln();
                (-softplus(ln_x) / th).exp()
            }
            Family::Gumbel => gumbel_inverse(th, r, u)?,
            Family::Frank if th > 0.0 => frank_inverse(th, r, u),
            Family::Frank => 1.0 - frank_inverse(-th, 1.0 - r, u),
        };
        Ok(v)
    }

    /// Newton refinement on the forward conditional CDF; kept only when it
    /// reduces the residual.
    fn polish(&self, r: f64, u: f64, v0: f64) -> f64 {
        let mut v = v0.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        let mut res = self.conditional_cdf(v, u) - r;
        for _ in 0..4 {
            if res.abs() <= 1e-13 {
                break;
            }
            let slope = self.density(u, v);
            if !(slope > 0.0 && slope.is_finite()) {
                break;
            }
            let cand = v - res / slope;
            if !(cand > 0.0 && cand < 1.0) {
                break;
            }
            let cand_res = self.conditional_cdf(cand, u) - r;
            if cand_res.abs() >= res.abs() {
                break;
            }
            v = cand;
            res = cand_res;
        }
        v
    }

    /// Draws `n` pairs by conditional inversion.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut us = Vec::with_capacity(n);
        let mut vs = Vec::with_capacity(n);
        for _ in 0..n {
            let u = open_unit(rng);
            let r = open_unit(rng);
            us.push(u);
            vs.push(self.conditional_inverse(r, u)?);
        }
        Ok((us, vs))
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.random();
        if x > 0.0 {
            return x;
        }
    }
}

/// Selects the family with the largest log-likelihood among those
/// compatible with the sample's Kendall tau.
pub fn select_copula(obs: &PseudoObservations) -> Result<CopulaFit> {
    if obs.len() < 3 {
        return Err(PasError::InsufficientData {
            needed: 3,
            got: obs.len(),
        });
    }
    let tau = kendall_tau(&obs.u, &obs.v, TiePolicy::TauA)?.clamp(-TAU_LIMIT, TAU_LIMIT);
    let mut best: Option<CopulaFit> = None;
    for family in FAMILIES {
        let Ok(copula) = Copula::from_tau(family, tau) else {
            continue;
        };
        let loglik = copula.log_likelihood(obs);
        if !loglik.is_nan() && best.is_none_or(|b| loglik > b.loglik) {
            best = Some(CopulaFit { copula, loglik });
        }
    }
    match best {
        Some(fit) => Ok(fit),
        None => {
            let copula = Copula::from_tau(Family::Gaussian, tau)?;
            Ok(CopulaFit {
                copula,
                loglik: copula.log_likelihood(obs),
            })
        }
    }
}

/// `ln(u^-θ + v^-θ - 1)` for the Clayton family.
fn clayton_ln_s(th: f64, u: f64, v: f64) -> f64 {
    let a = -th * u.ln();
    let b = -th * v.ln();
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + ((lo - hi).exp() - (-hi).exp()).ln_1p()
}

/// `(x^θ + y^θ)^(1/θ)` for the Gumbel family, with x, y the negative logs.
fn gumbel_a(th: f64, x: f64, y: f64) -> f64 {
    if x == 0.0 {
        return y;
    }
    if y == 0.0 {
        return x;
    }
    (log_add_exp(th * x.ln(), th * y.ln()) / th).exp()
}

/// Gumbel conditional inverse. With `A = (x^θ + y^θ)^(1/θ)`, the equation
/// `h(v|u) = r` reduces to `A + (θ-1) ln A = x - ln r + (θ-1) ln x`, a
/// monotone equation in `t = ln A` bracketed below by `ln x`.
fn gumbel_inverse(th: f64, r: f64, u: f64) -> Result<f64> {
    let x = -u.ln();
    let rhs = x - r.ln() + (th - 1.0) * x.ln();
    let g = |t: f64| t.exp() + (th - 1.0) * t - rhs;
    let mut lo = x.ln();
    let mut hi = lo + 1.0;
    let mut expansions = 0;
    while g(hi) < 0.0 {
        hi += (hi - lo) * 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(PasError::Numeric(format!(
                "Gumbel inverse not bracketed for r={r}, u={u}, theta={th}"
            )));
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gt = g(t);
        if gt == 0.0 {
            break;
        }
        if gt < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = t - gt / (t.exp() + th - 1.0);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(1.0);
        t = next;
        if done || hi - lo <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            break;
        }
    }
    let gap = -(th * (x.ln() - t)).exp_m1();
    if gap <= 0.0 {
        return Ok(1.0);
    }
    let y = (t + gap.ln() / th).exp();
    Ok((-y).exp())
}

/// `ln` of `e^{-θu}(1 - e^{-θv}) + e^{-θv}(1 - e^{-θ(1-v)})`, the Frank
/// denominator `(1 - e^{-θ}) - (1 - e^{-θu})(1 - e^{-θv})` written as a sum of
/// non-negative terms.
fn frank_ln_den(th: f64, u: f64, v: f64) -> f64 {
    log_add_exp(
        -th * u + ln_one_minus_exp(-th * v),
        -th * v + ln_one_minus_exp(-th * (1.0 - v)),
    )
}

/// `ln(1 - e^x)` for x <= 0.
fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

fn frank_cdf(th: f64, u: f64, v: f64) -> f64 {
    -(frank_ln_den(th, u, v) - ln_one_minus_exp(-th)) / th
}

fn frank_h(th: f64, u: f64, v: f64) -> f64 {
    (-th * u + ln_one_minus_exp(-th * v) - frank_ln_den(th, u, v)).exp()
}

fn frank_ln_density(th: f64, u: f64, v: f64) -> f64 {
    th.ln() + ln_one_minus_exp(-th) - th * (u + v) - 2.0 * frank_ln_den(th, u, v)
}

fn frank_inverse(th: f64, r: f64, u: f64) -> f64 {
    let ln_r = r.ln();
    let ln_1mr = (-r).ln_1p();
    let ln_q = log_add_exp(ln_1mr - th * u, ln_r - th) - log_add_exp(ln_r, ln_1mr - th * u);
    -ln_q / th
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cases() -> Vec<Copula> {
        vec![
            Copula::from_param(Family::Gaussian, 0.6).unwrap(),
            Copula::from_param(Family::Gaussian, -0.4).unwrap(),
            Copula::from_param(Family::Clayton, 2.0).unwrap(),
            Copula::from_param(Family::Gumbel, 2.5).unwrap(),
            Copula::from_param(Family::Frank, 6.0).unwrap(),
            Copula::from_param(Family::Frank, -3.0).unwrap(),
        ]
    }

    #[test]
    fn tau_relations() {
        let c = Copula::from_tau(Family::Clayton, 0.5).unwrap();
        assert!((c.param - 2.0).abs() < 1e-14);
        let g = Copula::from_tau(Family::Gumbel, 0.5).unwrap();
        assert!((g.param - 2.0).abs() < 1e-14);
        assert!((g.upper_tail() - (2.0 - 2f64.sqrt())).abs() < 1e-14);
        assert_eq!(Copula::from_tau(Family::Gaussian, 0.0).unwrap().param, 0.0);
        for &t in &[-0.7, -0.05, 1e-6, 0.3, 0.9, TAU_LIMIT] {
            let f = Copula::from_tau(Family::Frank, t).unwrap();
            assert!((frank_tau(f.param) - t).abs() < 1e-10, "tau={t}");
        }
        assert!(matches!(
            Copula::from_tau(Family::Clayton, -0.2),
            Err(PasError::FamilyIncompatible { .. })
        ));
        assert!(Copula::from_tau(Family::Gumbel, 0.0).is_err());
    }

    #[test]
    fn clayton_closed_form_value() {
        let c = Copula::from_param(Family::Clayton, 2.0).unwrap();
        assert!((c.cdf(0.5, 0.5) - 7f64.powf(-0.5)).abs() < 1e-14);
    }

    #[test]
    fn frank_independence_limit() {
        let f = Copula::from_param(Family::Frank, 1e-4).unwrap();
        for &(u, v) in &[(0.2, 0.7), (0.5, 0.5), (0.9, 0.1)] {
            let first_order = 0.5e-4 * u * v * (1.0 - u) * (1.0 - v);
            assert!((f.cdf(u, v) - u * v - first_order).abs() < 1e-9);
            assert!((f.cdf(u, v) - u * v).abs() <= 1e-4 / 32.0);
        }
    }

    #[test]
    fn boundaries_and_symmetry() {
        for c in cases() {
            for &w in &[0.0, 0.13, 0.5, 0.99] {
                assert_eq!(c.cdf(w, 1.0), w);
                assert_eq!(c.cdf(1.0, w), w);
            }
            for &(u, v) in &[(0.2, 0.7), (0.05, 0.93), (0.6, 0.61)] {
                assert!((c.density(u, v) - c.density(v, u)).abs() < 1e-9 * c.density(u, v));
                assert!((c.cdf(u, v) - c.cdf(v, u)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for c in cases() {
            for &(u, v) in &[(0.3, 0.4), (0.7, 0.2), (0.55, 0.8)] {
                let e = 1e-5;
                let h_fd = (c.cdf(u + e, v) - c.cdf(u - e, v)) / (2.0 * e);
                assert!((h_fd - c.conditional_cdf(v, u)).abs() < 1e-7, "{c:?}");
                let d_fd = (c.conditional_cdf(v + e, u) - c.conditional_cdf(v - e, u)) / (2.0 * e);
                assert!(
                    (d_fd - c.density(u, v)).abs() < 1e-4 * c.density(u, v).max(1.0),
                    "{c:?}"
                );
            }
        }
    }

    #[test]
    fn inverse_round_trip_including_extreme_parameters() {
        let mut all = cases();
        all.push(Copula::from_tau(Family::Gumbel, TAU_LIMIT).unwrap());
        all.push(Copula::from_tau(Family::Clayton, TAU_LIMIT).unwrap());
        all.push(Copula::from_tau(Family::Frank, TAU_LIMIT).unwrap());
        all.push(Copula::from_tau(Family::Gaussian, TAU_LIMIT).unwrap());
        for c in all {
            for &r in &[1e-6, 0.01, 0.3, 0.5, 0.77, 0.999999] {
                // beyond u = 0.9999 a near-comonotone v sits within a few ulps of 1
                for &u in &[1e-6, 0.02, 0.4, 0.9, 0.9999] {
                    let v = c.conditional_inverse(r, u).unwrap();
                    assert!(v > 0.0 && v < 1.0);
                    let back = c.conditional_cdf(v, u);
                    assert!(
                        (back - r).abs() < 1e-9,
                        "{c:?} r={r} u={u} v={v} back={back}"
                    );
                }
            }
        }
    }

    #[test]
    fn independence_inverse_is_identity() {
        let g = Copula::from_param(Family::Gaussian, 0.0).unwrap();
        assert!((g.conditional_inverse(0.3, 0.8).unwrap() - 0.3).abs() < 1e-15);
        let gu = Copula::from_param(Family::Gumbel, 1.0).unwrap();
        assert!((gu.conditional_inverse(0.3, 0.8).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn json_shape() {
        let fit = CopulaFit {
            copula: Copula::from_param(Family::Clayton, 2.0).unwrap(),
            loglik: -1.5,
        };
        let s = serde_json::to_string(&fit).unwrap();
        assert_eq!(
            s,
            r#"{"family":"clayton","param":2.0,"tau":0.5,"loglik":-1.5}"#
        );
        let back: CopulaFit = serde_json::from_str(&s).unwrap();
        assert_eq!(back, fit);
    }

    #[test]
    fn three_concordant_points() {
        let obs = PseudoObservations::from_samples(&[1.0, 2.0, 3.0], &[2.0, 4.0, 9.0]).unwrap();
        let fit = select_copula(&obs).unwrap();
        assert!(fit.loglik.is_finite());
        assert!((fit.copula.tau - TAU_LIMIT).abs() < 1e-15);
    }
}
