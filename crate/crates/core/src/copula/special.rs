//! Debye function and the bivariate normal CDF.

use std::f64::consts::PI;

use crate::numeric::{gl20, integrate, norm_cdf};

/// First-order Debye function `D1(x) = (1/x) ∫_0^x t / (e^t - 1) dt`.
pub fn debye1(x: f64) -> f64 {
    if x < 0.0 {
        return debye1(-x) - 0.5 * x;
    }
    if x < 1e-3 {
        return 1.0 - x / 4.0 + x * x / 36.0;
    }
    let integrand = |t: f64| if t == 0.0 { 1.0 } else { t / t.exp_m1() };
    let integral = if x <= 5.0 {
        integrate(integrand, 0.0, x, 4)
    } else {
        let mut tail = 0.0;
        for k in 1..200 {
            let k = k as f64;
            let term = (-k * x).exp() * (x / k + 1.0 / (k * k));
            tail += term;
            if term < 1e-18 * tail {
                break;
            }
        }
        PI * PI / 6.0 - tail
    };
    integral / x
}

/// Kendall's tau of the Frank copula with parameter `theta`.
pub fn frank_tau(theta: f64) -> f64 {
    let t = theta.abs();
    let tau = if t < 0.5 {
        let t2 = t * t;
        t * (1.0 / 9.0
            + t2 * (-1.0 / 900.0
                + t2 * (1.0 / 52920.0 + t2 * (-1.0 / 2721600.0 + t2 / 131725440.0))))
    } else {
        1.0 - 4.0 / t * (1.0 - debye1(t))
    };
    tau.copysign(theta)
}

/// `P(X <= h, Y <= k)` for standard bivariate normal with correlation `r`,
/// after Genz's refinement of the Drezner-Wesolowsky method.
pub fn bivariate_normal_cdf(h: f64, k: f64, r: f64) -> f64 {
    upper_orthant(-h, -k, r)
}

fn upper_orthant(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY {
            1.0
        } else {
            norm_cdf(-k)
        };
    }
    if k == f64::NEG_INFINITY {
        return norm_cdf(-h);
    }
    let (x, w) = gl20();
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = r.asin();
        for (xi, wi) in x.iter().zip(w) {
            let sn = (0.5 * asr * (1.0 + xi)).sin();
            bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        bvn = bvn * asr / (4.0 * PI) + norm_cdf(-h) * norm_cdf(-k);
    } else {
        let mut k = k;
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = (1.0 - r) * (1.0 + r);
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -0.5 * (bs / as_ + hk);
            if asr > -100.0 {
                bvn = a
                    * asr.exp()
                    * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = (2.0 * PI).sqrt() * norm_cdf(-b / a);
                bvn -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a *= 0.5;
            for (xi, wi) in x.iter().zip(w) {
                let xs = (a * (xi + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -0.5 * (bs / xs + hk);
                if asr > -100.0 {
                    let sp = 1.0 + c * xs * (1.0 + d * xs);
                    let ep = (-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs;
                    bvn += a * wi * asr.exp() * (ep - sp);
                }
            }
            bvn = -bvn / (2.0 * PI);
        }
        if r > 0.0 {
            bvn += norm_cdf(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 {
                norm_cdf(k) - norm_cdf(h)
            } else {
                norm_cdf(-h) - norm_cdf(-k)
            };
            bvn = l - bvn;
        }
    }
    bvn.clamp(0.0, 1.0)
}
