//! Synthetic validation cases with matched LF/HF peaks and brute-force
//! oracles.
//!
//! The LF indicator is the wave elevation: one peak per excursion above
//! `mean + k std` of each seed record. Every LF peak is mapped to an HF peak
//! through an [`HfMap`]; the noise of an event is drawn from its own RNG
//! stream, so HF values do not depend on which events are evaluated first.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::empirical::ExceedanceDistribution;
use crate::engine::{LfEvent, LfPool, MatchedDataset};
use crate::error::{PasError, Result};
use crate::keyvalue::KeyValues;
use crate::par::{map_indexed, ExecMode};
use crate::signals::{
    encounter_period, extract_peaks, generate_jonswap_trace, ExposureConfig, PeakMethod,
    PeakSeries, TimeTrace, WaveCondition,
};

/// Seconds recorded either side of an event in HF request windows.
pub const WINDOW_HALF_WIDTH: f64 = 30.0;

const HF_STREAM_BASE: u64 = 1 << 32;

/// LF to HF peak transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum HfMap {
    /// h = l
    Identity,
    /// h = l + alpha l^2
    Quadratic { alpha: f64 },
    /// h = gain l exp(spread e)
    HeteroscedasticNoise { gain: f64, spread: f64 },
    /// h = l below the threshold t, and l + beta d^2 + eta d e above it,
    /// with d = l - t.
    ThresholdAmplified { threshold: f64, beta: f64, eta: f64 },
}

impl HfMap {
    pub fn name(&self) -> &'static str {
        match self {
            HfMap::Identity => "identity",
            HfMap::Quadratic { .. } => "quadratic",
            HfMap::HeteroscedasticNoise { .. } => "heteroscedastic-noise",
            HfMap::ThresholdAmplified { .. } => "threshold-amplified",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PasError::Config(format!("{}: {m}", self.name())));
        match *self {
            HfMap::Identity => Ok(()),
            HfMap::Quadratic { alpha } if !(0.0..=1.0).contains(&alpha) => {
                bad("alpha must lie in [0, 1]")
            }
            HfMap::HeteroscedasticNoise { gain, spread }
                if !(gain > 0.0 && gain.is_finite()) || !(0.0..=1.0).contains(&spread) =>
            {
                bad("gain must be positive and spread must lie in [0, 1]")
            }
            HfMap::ThresholdAmplified {
                threshold,
                beta,
                eta,
            } if !threshold.is_finite()
                || !(0.0..=5.0).contains(&beta)
                || !(0.0..=2.0).contains(&eta) =>
            {
                bad("threshold must be finite, beta in [0, 5] and eta in [0, 2]")
            }
            _ => Ok(()),
        }
    }

    /// True when the map uses event-local noise.
    pub fn is_noisy(&self) -> bool {
        match *self {
            HfMap::HeteroscedasticNoise { spread, .. } => spread > 0.0,
            HfMap::ThresholdAmplified { eta, .. } => eta > 0.0,
            _ => false,
        }
    }

    /// Applies the map with the standard-normal draw `e`.
    pub fn apply(&self, l: f64, e: f64) -> f64 {
        match *self {
            HfMap::Identity => l,
            HfMap::Quadratic { alpha } => l + alpha * l * l,
            HfMap::HeteroscedasticNoise { gain, spread } => gain * l * (spread * e).exp(),
            HfMap::ThresholdAmplified {
                threshold,
                beta,
                eta,
            } => {
                let d = l - threshold;
                if d < 0.0 {
                    l
                } else {
                    l + beta * d * d + eta * d * e
                }
            }
        }
    }
}

/// Standard-normal draw owned by one event.
pub fn event_noise(rng_seed: u64, event_id: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(HF_STREAM_BASE + event_id);
    StandardNormal.sample(&mut rng)
}

/// Seed of the wave record of seed index `i`.
pub fn trace_seed(rng_seed: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(i as u64);
    rng.next_u64()
}

/// Definition of a synthetic scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub name: String,
    pub wave: WaveCondition,
    /// Exposure duration per seed [s].
    pub texp: f64,
    pub n_seeds: usize,
    /// Record sample interval [s].
    pub dt: f64,
    /// Peak threshold in record standard deviations above the mean.
    pub threshold_sigma: f64,
    pub hf_map: HfMap,
    pub rng_seed: u64,
    /// Recommended stopping tolerances for this case [HF units, -].
    pub eps1: f64,
    pub eps2: f64,
}

const KV_KEYS: &[&str] = &[
    "name",
    "wave.hs",
    "wave.tp",
    "wave.gamma",
    "wave.depth",
    "wave.heading_deg",
    "wave.vx",
    "wave.g",
    "exposure.texp",
    "exposure.n_seeds",
    "record.dt",
    "record.threshold_sigma",
    "hf.type",
    "hf.alpha",
    "hf.gain",
    "hf.spread",
    "hf.threshold",
    "hf.beta",
    "hf.eta",
    "seed",
    "stop.eps1",
    "stop.eps2",
];

impl CaseSpec {
    pub fn validate(&self) -> Result<()> {
        self.wave.validate()?;
        self.hf_map.validate()?;
        if !(self.texp > 0.0) || self.n_seeds == 0 {
            return Err(PasError::Config(format!(
                "case {}: exposure needs texp > 0 and at least one seed",
                self.name
            )));
        }
        if !(self.dt > 0.0) || !self.threshold_sigma.is_finite() {
            return Err(PasError::Config(format!(
                "case {}: invalid record settings",
                self.name
            )));
        }
        if !(self.eps1 >= 0.0 && self.eps2 >= 0.0) {
            return Err(PasError::Config(format!(
                "case {}: tolerances must be non-negative",
                self.name
            )));
        }
        Ok(())
    }

    /// Encounter period, encounter count and probability of interest.
    pub fn exposure(&self) -> Result<ExposureConfig> {
        ExposureConfig::from_period(self.texp, self.n_seeds, encounter_period(&self.wave)?)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("name", &self.name);
        kv.set("wave.hs", self.wave.hs);
        kv.set("wave.tp", self.wave.tp);
        kv.set("wave.gamma", self.wave.gamma);
        kv.set("wave.depth", self.wave.depth);
        kv.set("wave.heading_deg", self.wave.heading_mu.to_degrees());
        kv.set("wave.vx", self.wave.vx);
        kv.set("wave.g", self.wave.g);
        kv.set("exposure.texp", self.texp);
        kv.set("exposure.n_seeds", self.n_seeds);
        kv.set("record.dt", self.dt);
        kv.set("record.threshold_sigma", self.threshold_sigma);
        kv.set("hf.type", self.hf_map.name());
        match self.hf_map {
            HfMap::Identity => {}
            HfMap::Quadratic { alpha } => kv.set("hf.alpha", alpha),
            HfMap::HeteroscedasticNoise { gain, spread } => {
                kv.set("hf.gain", gain);
                kv.set("hf.spread", spread);
            }
            HfMap::ThresholdAmplified {
                threshold,
                beta,
                eta,
            } => {
                kv.set("hf.threshold", threshold);
                kv.set("hf.beta", beta);
                kv.set("hf.eta", eta);
            }
        }
        kv.set("seed", self.rng_seed);
        kv.set("stop.eps1", self.eps1);
        kv.set("stop.eps2", self.eps2);
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(KV_KEYS)?;
        let hf_map = match kv.get::<String>("hf.type")?.as_str() {
            "identity" => HfMap::Identity,
            "quadratic" => HfMap::Quadratic {
                alpha: kv.get("hf.alpha")?,
            },
            "heteroscedastic-noise" => HfMap::HeteroscedasticNoise {
                gain: kv.get("hf.gain")?,
                spread: kv.get("hf.spread")?,
            },
            "threshold-amplified" => HfMap::ThresholdAmplified {
                threshold: kv.get("hf.threshold")?,
                beta: kv.get("hf.beta")?,
                eta: kv.get("hf.eta")?,
            },
            other => return Err(PasError::Parse(format!("unknown hf.type '{other}'"))),
        };
        let defaults = WaveCondition::new(1.0, 1.0, 1.0);
        let spec = Self {
            name: kv.get("name")?,
            wave: WaveCondition {
                hs: kv.get("wave.hs")?,
                tp: kv.get("wave.tp")?,
                gamma: kv.get_or("wave.gamma", 3.3)?,
                depth: kv.get_or("wave.depth", defaults.depth)?,
                heading_mu: kv.get_or("wave.heading_deg", 180.0f64)?.to_radians(),
                vx: kv.get_or("wave.vx", 0.0)?,
                g: kv.get_or("wave.g", defaults.g)?,
            },
            texp: kv.get("exposure.texp")?,
            n_seeds: kv.get("exposure.n_seeds")?,
            dt: kv.get_or("record.dt", 0.25)?,
            threshold_sigma: kv.get_or("record.threshold_sigma", 1.0)?,
            hf_map,
            rng_seed: kv.get_or("seed", 0)?,
            eps1: kv.get_or("stop.eps1", 0.1)?,
            eps2: kv.get_or("stop.eps2", 0.05)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Key-value text with a short schema header.
    pub fn to_config_text(&self) -> String {
        let mut out = String::from(
            "# Synthetic case definition.\n\
             # wave.*: JONSWAP sea state (hs m, tp s, heading_deg 180 = head seas, vx m/s)\n\
             # exposure.*: duration per seed [s] and seed count\n\
             # record.*: sample interval [s], peak threshold in standard deviations\n\
             # hf.type: identity | quadratic | heteroscedastic-noise | threshold-amplified\n\
             # stop.*: recommended stopping tolerances\n",
        );
        out.push_str(&self.to_kv().render());
        out
    }

    pub fn from_config_text(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text)?)
    }
}

/// LF and HF peaks sharing event ids and instants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPeaks {
    pub lf: PeakSeries,
    pub hf: PeakSeries,
}

impl MatchedPeaks {
    pub fn new(lf: PeakSeries, hf: PeakSeries) -> Result<Self> {
        if lf.event_ids != hf.event_ids || lf.times != hf.times {
            return Err(PasError::Domain(
                "LF and HF peaks are not paired event by event".into(),
            ));
        }
        Ok(Self { lf, hf })
    }

    pub fn len(&self) -> usize {
        self.lf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lf.is_empty()
    }

    /// Paired peaks in event-time order.
    pub fn scatter_csv(&self) -> String {
        let mut out = String::from("lf,hf\n");
        for (l, h) in self.lf.values.iter().zip(&self.hf.values) {
            let _ = writeln!(out, "{l},{h}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("event_id,time,lf,hf\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.lf.event_ids[i], self.lf.times[i], self.lf.values[i], self.hf.values[i]
            );
        }
        out
    }
}

/// A materialised case: peaks, exposure and the HF oracle.
#[derive(Debug, Clone)]
pub struct BuiltCase {
    pub spec: CaseSpec,
    pub exposure: ExposureConfig,
    pub peaks: MatchedPeaks,
    pub oracle: ExceedanceDistribution,
    pub oracle_mpm: f64,
    pub trace_seeds: Vec<u64>,
}

impl BuiltCase {
    pub fn lf_pool(&self) -> Result<LfPool> {
        LfPool::new(&self.peaks.lf, self.exposure.n_w)
    }

    pub fn hf_dataset(&self) -> Result<MatchedDataset> {
        MatchedDataset::new(&self.peaks.hf.event_ids, &self.peaks.hf.values)
    }

    pub fn lf_distribution(&self) -> Result<ExceedanceDistribution> {
        ExceedanceDistribution::from_values(&self.peaks.lf.values, self.exposure.n_w)
    }

    /// Regenerates the record of one seed on the global time axis.
    pub fn trace(&self, seed_index: usize) -> Result<TimeTrace> {
        let seed = *self.trace_seeds.get(seed_index).ok_or_else(|| {
            PasError::Domain(format!("seed index {seed_index} is outside the case"))
        })?;
        let mut t = generate_jonswap_trace(&self.spec.wave, self.spec.texp, self.spec.dt, seed)?;
        t.start = seed_index as f64 * self.spec.texp;
        Ok(t)
    }

    /// LF record samples within [`WINDOW_HALF_WIDTH`] of an event.
    pub fn window(&self, event: &LfEvent) -> Result<Vec<(f64, f64)>> {
        let i = (event.time / self.spec.texp).floor().max(0.0) as usize;
        let trace = self.trace(i)?;
        Ok(trace.window(
            event.time - WINDOW_HALF_WIDTH,
            event.time + WINDOW_HALF_WIDTH,
        ))
    }

    /// Standard deviation of HF around LF for pairs with LF above `level`.
    pub fn conditional_spread(&self, level: f64) -> f64 {
        let r: Vec<f64> = self
            .peaks
            .lf
            .values
            .iter()
            .zip(&self.peaks.hf.values)
            .filter(|(l, _)| **l > level)
            .map(|(l, h)| h - self.spec.hf_map.apply(*l, 0.0))
            .collect();
        if r.len() < 2 {
            return 0.0;
        }
        crate::numeric::sample_std(&r)
    }
}

/// Builds the LF Monte-Carlo peaks, their HF partners and the oracle.
pub fn build_case(spec: &CaseSpec, exec: ExecMode) -> Result<BuiltCase> {
    spec.validate()?;
    let exposure = spec.exposure()?;
    let trace_seeds: Vec<u64> = (0..spec.n_seeds)
        .map(|i| trace_seed(spec.rng_seed, i))
        .collect();
    let per_seed = map_indexed(exec, spec.n_seeds, |i| -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = generate_jonswap_trace(&spec.wave, spec.texp, spec.dt, trace_seeds[i])?;
        let level = trace.mean() + spec.threshold_sigma * trace.std();
        let p = extract_peaks(&trace, PeakMethod::Threshold(level))?;
        let offset = i as f64 * spec.texp;
        Ok((p.values, p.times.iter().map(|t| t + offset).collect()))
    });
    let (mut lf_values, mut times) = (Vec::new(), Vec::new());
    for r in per_seed {
        let (v, t) = r?;
        lf_values.extend(v);
        times.extend(t);
    }
    let ids: Vec<u64> = (0..lf_values.len() as u64).collect();
    let hf_values: Vec<f64> = map_indexed(exec, lf_values.len(), |k| {
        let e = if spec.hf_map.is_noisy() {
            event_noise(spec.rng_seed, ids[k])
        } else {
            0.0
        };
        spec.hf_map.apply(lf_values[k], e)
    });
    let lf = PeakSeries::new(lf_values, ids.clone(), times.clone())?;
    let hf = PeakSeries::new(hf_values, ids, times)?;
    let oracle = ExceedanceDistribution::from_values(&hf.values, exposure.n_w)?;
    let oracle_mpm = oracle.value_at_poe(exposure.pexp)?;
    Ok(BuiltCase {
        spec: spec.clone(),
        exposure,
        peaks: MatchedPeaks::new(lf, hf)?,
        oracle,
        oracle_mpm,
        trace_seeds,
    })
}

fn wave_a() -> WaveCondition {
    WaveCondition {
        depth: 30.0,
        ..WaveCondition::new(10.0, 11.0, 3.3)
    }
}

fn wave_b() -> WaveCondition {
    WaveCondition {
        vx: 5.1,
        heading_mu: PI,
        ..WaveCondition::new(13.2, 10.0, 3.0)
    }
}

fn wave_c() -> WaveCondition {
    WaveCondition {
        depth: 179.9,
        vx: 2.4,
        heading_mu: 150f64.to_radians(),
        ..WaveCondition::new(8.1, 9.4, 3.3)
    }
}

/// The four built-in cases, ordered by strength of non-linearity.
pub fn case_catalog() -> Vec<CaseSpec> {
    let a = wave_a();
    let alpha = 0.5 * a.omega_p().powi(2) / a.g;
    vec![
        CaseSpec {
            name: "C0".into(),
            wave: a.clone(),
            texp: 3600.0,
            n_seeds: 50,
            dt: 0.25,
            threshold_sigma: 1.0,
            hf_map: HfMap::Identity,
            rng_seed: 0,
            eps1: 0.02,
            eps2: 0.05,
        },
        CaseSpec {
            name: "C1".into(),
            wave: a,
            texp: 3600.0,
            n_seeds: 50,
            dt: 0.25,
            threshold_sigma: 1.0,
            hf_map: HfMap::Quadratic { alpha },
            rng_seed: 1,
            eps1: 0.03,
            eps2: 0.05,
        },
        CaseSpec {
            name: "C2".into(),
            wave: wave_b(),
            texp: 1800.0,
            n_seeds: 60,
            dt: 0.25,
            threshold_sigma: 1.0,
            hf_map: HfMap::HeteroscedasticNoise {
                gain: 1.0,
                spread: 0.08,
            },
            rng_seed: 2,
            eps1: 0.05,
            eps2: 0.05,
        },
        CaseSpec {
            name: "C3".into(),
            wave: wave_c(),
            texp: 1800.0,
            n_seeds: 70,
            dt: 0.25,
            threshold_sigma: 1.0,
            hf_map: HfMap::ThresholdAmplified {
                threshold: 3.6,
                beta: 0.5,
                eta: 1.0,
            },
            rng_seed: 3,
            eps1: 0.12,
            eps2: 0.05,
        },
    ]
}

/// Catalog entry by name (case-insensitive).
pub fn catalog_case(name: &str) -> Result<CaseSpec> {
    case_catalog()
        .into_iter()
        .find(|c| c.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| PasError::Config(format!("unknown case '{name}' (catalog: C0, C1, C2, C3)")))
}
