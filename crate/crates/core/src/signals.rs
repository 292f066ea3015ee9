//! Irregular-wave records, peak extraction and wave-encounter statistics.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PasError, Result};

pub const STANDARD_GRAVITY: f64 = 9.81;

/// Minimum number of frequency components used to synthesise a record.
pub const MIN_FREQUENCY_BINS: usize = 400;

/// Irregular sea state plus the operating condition of the structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveCondition {
    /// Significant wave height [m].
    pub hs: f64,
    /// Peak wave period [s].
    pub tp: f64,
    /// JONSWAP peak enhancement factor.
    pub gamma: f64,
    /// Water depth [m].
    pub depth: f64,
    /// Wave heading relative to the structure [rad]; pi is head seas.
    pub heading_mu: f64,
    /// Forward speed [m/s].
    pub vx: f64,
    /// Gravitational acceleration [m/s^2].
    pub g: f64,
}

impl WaveCondition {
    pub fn new(hs: f64, tp: f64, gamma: f64) -> Self {
        Self {
            hs,
            tp,
            gamma,
            depth: 1000.0,
            heading_mu: PI,
            vx: 0.0,
            g: STANDARD_GRAVITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.hs > 0.0
            && self.tp > 0.0
            && self.gamma >= 1.0
            && self.depth > 0.0
            && (0.0..=2.0 * PI).contains(&self.heading_mu)
            && self.g > 0.0
            && self.vx.is_finite();
        if ok {
            Ok(())
        } else {
            Err(PasError::Config(format!("invalid wave condition {self:?}")))
        }
    }

    /// Angular peak frequency [rad/s].
    pub fn omega_p(&self) -> f64 {
        2.0 * PI / self.tp
    }
}

/// Peak encounter period of a structure moving at `vx` through waves from
/// `heading_mu`, from the deep-water Doppler shift of the peak frequency.
pub fn encounter_period(cond: &WaveCondition) -> Result<f64> {
    let denom = 1.0 - 2.0 * PI * cond.vx * cond.heading_mu.cos() / (cond.tp * cond.g);
    if denom <= 0.0 || !denom.is_finite() {
        return Err(PasError::Domain(format!(
            "encounter frequency is not positive (denominator {denom}); overtaking waves are not supported"
        )));
    }
    Ok(cond.tp / denom)
}

/// Number of wave encounters in `n_seeds` records of `texp` seconds.
pub fn encounter_count(texp: f64, n_seeds: usize, tpe: f64) -> Result<u64> {
    if !(texp > 0.0 && n_seeds > 0 && tpe > 0.0) {
        return Err(PasError::Domain(format!(
            "encounter count needs positive inputs (texp={texp}, n={n_seeds}, tpe={tpe})"
        )));
    }
    Ok((n_seeds as f64 * texp / tpe).round().max(1.0) as u64)
}

/// Exposure duration, seed count and the resulting probability of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureConfig {
    pub texp: f64,
    pub n_seeds: usize,
    pub tpe: f64,
    pub n_w: u64,
    pub pexp: f64,
}

impl ExposureConfig {
    /// Encounter count estimated from the exposure and encounter period.
    pub fn from_period(texp: f64, n_seeds: usize, tpe: f64) -> Result<Self> {
        let n_w = encounter_count(texp, n_seeds, tpe)?;
        Self::with_count(texp, n_seeds, tpe, n_w)
    }

    /// Encounter count taken from an explicit wave record.
    pub fn with_count(texp: f64, n_seeds: usize, tpe: f64, n_w: u64) -> Result<Self> {
        if n_w < n_seeds as u64 {
            return Err(PasError::Domain(format!(
                "encounter count {n_w} is smaller than the seed count {n_seeds}"
            )));
        }
        Ok(Self {
            texp,
            n_seeds,
            tpe,
            n_w,
            pexp: n_seeds as f64 / n_w as f64,
        })
    }

    pub fn total_duration(&self) -> f64 {
        self.texp * self.n_seeds as f64
    }
}

/// Uniformly sampled signal record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub dt: f64,
    /// Time of the first sample [s].
    pub start: f64,
    pub values: Vec<f64>,
    pub seed_id: u64,
}

impl TimeTrace {
    pub fn new(dt: f64, start: f64, values: Vec<f64>, seed_id: u64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(PasError::Config(format!(
                "sample interval must be positive, got {dt}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PasError::Domain("trace contains non-finite samples".into()));
        }
        Ok(Self {
            dt,
            start,
            values,
            seed_id,
        })
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        let var =
            self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.values.len() as f64;
        var.sqrt()
    }

    /// Samples within `[t0, t1]`, as (time, value) pairs.
    pub fn window(&self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        (0..self.len())
            .map(|i| (self.time(i), self.values[i]))
            .filter(|(t, _)| *t >= t0 && *t <= t1)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.time(i), v);
        }
        out
    }
}

/// Peak magnitudes with their event labels and instants.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PeakSeries {
    pub values: Vec<f64>,
    pub event_ids: Vec<u64>,
    pub times: Vec<f64>,
}

impl PeakSeries {
    pub fn new(values: Vec<f64>, event_ids: Vec<u64>, times: Vec<f64>) -> Result<Self> {
        if values.len() != event_ids.len() || values.len() != times.len() {
            return Err(PasError::Domain(
                "peak series fields differ in length".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PasError::Domain(
                "peak series contains non-finite values".into(),
            ));
        }
        let mut ids = event_ids.clone();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(PasError::Domain(
                "peak series event ids are not unique".into(),
            ));
        }
        Ok(Self {
            values,
            event_ids,
            times,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("event_id,time,value\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                self.event_ids[i], self.times[i], self.values[i]
            );
        }
        out
    }
}

/// Event definition used by [`extract_peaks`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "level")]
pub enum PeakMethod {
    /// Largest sample between successive zero up-crossings.
    ZeroUpcrossMax,
    /// Magnitude of the deepest trough between successive zero up-crossings.
    ZeroUpcrossMin,
    /// Largest sample of every excursion above the level.
    Threshold(f64),
}

/// Mean plus one standard deviation of the record.
pub fn default_threshold(trace: &TimeTrace) -> f64 {
    trace.mean() + trace.std()
}

/// Extracts one peak per qualifying cycle or excursion. Event ids are the
/// local peak indices in time order; incomplete cycles at the record ends are
/// discarded.
pub fn extract_peaks(trace: &TimeTrace, method: PeakMethod) -> Result<PeakSeries> {
    if trace.is_empty() {
        return Err(PasError::Domain(
            "cannot extract peaks from an empty trace".into(),
        ));
    }
    let x = &trace.values;
    let mut values = Vec::new();
    let mut times = Vec::new();
    match method {
        PeakMethod::ZeroUpcrossMax | PeakMethod::ZeroUpcrossMin => {
            let ups: Vec<usize> = (1..x.len())
                .filter(|&i| x[i - 1] < 0.0 && x[i] >= 0.0)
                .collect();
            for w in ups.windows(2) {
                let cycle = w[0]..w[1];
                let pick = if method == PeakMethod::ZeroUpcrossMax {
                    cycle.max_by(|&a, &b| x[a].total_cmp(&x[b]).then(b.cmp(&a)))
                } else {
                    cycle.min_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)))
                };
                if let Some(i) = pick {
                    values.push(if method == PeakMethod::ZeroUpcrossMax {
                        x[i]
                    } else {
                        -x[i]
                    });
                    times.push(trace.time(i));
                }
            }
        }
        PeakMethod::Threshold(level) => {
            let mut current: Option<usize> = None;
            for i in 1..x.len() {
                if x[i - 1] <= level && x[i] > level {
                    current = Some(i);
                } else if let Some(best) = current {
                    if x[i] > level {
                        if x[i] > x[best] {
                            current = Some(i);
                        }
                    } else {
                        values.push(x[best]);
                        times.push(trace.time(best));
                        current = None;
                    }
                }
            }
        }
    }
    let ids = (0..values.len() as u64).collect();
    PeakSeries::new(values, ids, times)
}

/// Zero up-crossing count of a record, the explicit-record estimate of the
/// number of wave encounters.
pub fn count_zero_upcrossings(trace: &TimeTrace) -> usize {
    trace
        .values
        .windows(2)
        .filter(|w| w[0] < 0.0 && w[1] >= 0.0)
        .count()
}

/// Unnormalised JONSWAP spectral shape at angular frequency `omega`.
pub fn jonswap_shape(omega: f64, omega_p: f64, gamma: f64) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    let sigma = if omega <= omega_p { 0.07 } else { 0.09 };
    let r = (-(omega - omega_p).powi(2) / (2.0 * sigma * sigma * omega_p * omega_p)).exp();
    omega.powi(-5) * (-1.25 * (omega_p / omega).powi(4)).exp() * gamma.powf(r)
}

/// Discretised wave components: (angular frequencies, amplitudes).
///
/// The band [0.4, 4] times the peak frequency is split into equal bins, at
/// least [`MIN_FREQUENCY_BINS`] and enough that the record does not repeat
/// within `duration`. Amplitudes are scaled so the discrete variance equals
/// (Hs/4)^2.
pub fn jonswap_components(cond: &WaveCondition, duration: f64) -> (Vec<f64>, Vec<f64>) {
    let wp = cond.omega_p();
    let (lo, hi) = (0.4 * wp, 4.0 * wp);
    let repeat_bins = ((hi - lo) * duration / (2.0 * PI)).ceil() as usize;
    let bins = MIN_FREQUENCY_BINS.max(repeat_bins);
    let dw = (hi - lo) / bins as f64;
    let omegas: Vec<f64> = (0..bins).map(|i| lo + (i as f64 + 0.5) * dw).collect();
    let raw: Vec<f64> = omegas
        .iter()
        .map(|&w| jonswap_shape(w, wp, cond.gamma) * dw)
        .collect();
    let target_m0 = (cond.hs / 4.0).powi(2);
    let scale = target_m0 / raw.iter().sum::<f64>();
    let amps = raw.iter().map(|s| (2.0 * s * scale).sqrt()).collect();
    (omegas, amps)
}

/// Zero-mean Gaussian sea-surface record by random-phase superposition.
pub fn generate_jonswap_trace(
    cond: &WaveCondition,
    duration: f64,
    dt: f64,
    rng_seed: u64,
) -> Result<TimeTrace> {
    cond.validate()?;
    if !(duration > 0.0) {
        return Err(PasError::Config(format!(
            "record duration must be positive, got {duration}"
        )));
    }
    if !(dt > 0.0) || dt > cond.tp / 20.0 {
        return Err(PasError::Config(format!(
            "sample interval {dt} s is too coarse for Tp = {} s (need dt <= Tp/20)",
            cond.tp
        )));
    }
    let (omegas, amps) = jonswap_components(cond, duration);
    // A moving structure sees every component at its encounter frequency.
    let doppler = cond.vx * cond.heading_mu.cos() / cond.g;
    let omegas: Vec<f64> = omegas.iter().map(|&w| w - w * w * doppler).collect();
    if omegas.iter().any(|&w| w <= 0.0) {
        return Err(PasError::Domain(
            "some wave components are overtaken by the structure (non-positive encounter frequency)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let phases: Vec<f64> = omegas
        .iter()
        .map(|_| rng.random::<f64>() * 2.0 * PI)
        .collect();

    let n = (duration / dt).floor() as usize;
    let mut values = vec![0.0; n];
    // Phasor recurrence, re-anchored periodically against drift.
    const RESYNC: usize = 256;
    for ((&w, &a), &phi) in omegas.iter().zip(&amps).zip(&phases) {
        let (rot_s, rot_c) = (w * dt).sin_cos();
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, v) in values.iter_mut().enumerate() {
            if i % RESYNC == 0 {
                let (s, c) = (w * i as f64 * dt + phi).sin_cos();
                re = c;
                im = s;
            } else {
                let nre = re * rot_c - im * rot_s;
                im = re * rot_s + im * rot_c;
                re = nre;
            }
            *v += a * re;
        }
    }
    TimeTrace::new(dt, 0.0, values, rng_seed)
}
