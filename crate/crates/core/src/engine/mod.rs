//! The adaptive screening loop shared by PAS and the AS baseline.
//!
//! Each iteration evaluates the pending HF events, predicts the HF exceedance
//! distribution from the selected LF/HF pairs, updates the stopping metrics
//! and acquires one new event. Predictions depend only on the selected set,
//! the iteration number and the seed, so a run restored from any checkpoint
//! continues exactly as the uninterrupted run would.

mod acquisition;
mod bootstrap;
mod hf;
mod pool;
mod stopping;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use acquisition::{initial_sample, md_acquire, md_target, nearest_unused};
pub use bootstrap::{
    aggregate_prediction, conditional_bootstrap, draw_rng, Aggregate, BootstrapDraws, UNIT_MARGIN,
    Z95,
};
pub use hf::{parse_response, ExternalHandshake, HfEvaluator, MatchedDataset, WindowFn};
pub use pool::{LfEvent, LfPool};
pub use stopping::{
    comparison_grid, mean_abs_change, on_grid, window_metrics, StoppingRule, COMPARISON_POINTS,
};

use crate::as_baseline;
use crate::copula::{select_copula, CopulaFit, PseudoObservations};
use crate::empirical::{BandwidthRule, KernelMarginal};
use crate::error::{PasError, Result};
use crate::par::ExecMode;

/// Clamp fraction above which an iteration record carries a warning.
pub const CLAMP_WARNING_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PAS")]
    Pas,
    #[serde(rename = "AS")]
    As,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pas => "PAS",
            Method::As => "AS",
        })
    }
}

/// Serde adapter writing non-finite floats as strings ("inf", "-inf", "nan"),
/// which plain JSON numbers cannot carry.
pub mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse::<f64>().map_err(serde::de::Error::custom),
        }
    }
}

/// Tuning of a screening run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PasConfig {
    pub m0_total: usize,
    pub m0_top: usize,
    /// Bootstrap draws per iteration.
    pub z: usize,
    /// Tolerance on the windowed mean distribution change [HF units].
    #[serde(with = "extended_float")]
    pub eps1: f64,
    /// Tolerance on the windowed MPM coefficient of variation.
    #[serde(with = "extended_float")]
    pub eps2: f64,
    pub k1: usize,
    pub k2: usize,
    pub max_iterations: usize,
    pub rng_seed: u64,
}

impl Default for PasConfig {
    fn default() -> Self {
        Self {
            m0_total: 9,
            m0_top: 4,
            z: 20,
            eps1: 0.1,
            eps2: 0.05,
            k1: 50,
            k2: 50,
            max_iterations: 400,
            rng_seed: 0,
        }
    }
}

impl PasConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(PasError::Config(m));
        if self.m0_top >= self.m0_total {
            return fail(format!(
                "m0_top={} must be below m0_total={}",
                self.m0_top, self.m0_total
            ));
        }
        if self.z < 2 {
            return fail(format!("z={} must be at least 2", self.z));
        }
        if self.eps1.is_nan() || self.eps1 < 0.0 || self.eps2.is_nan() || self.eps2 < 0.0 {
            return fail(format!(
                "tolerances must be non-negative, got {} and {}",
                self.eps1, self.eps2
            ));
        }
        if self.k1 == 0 || self.k2 == 0 || self.max_iterations == 0 {
            return fail("k1, k2 and max_iterations must be positive".into());
        }
        Ok(())
    }

    pub fn stopping_rule(&self) -> StoppingRule {
        StoppingRule {
            eps1: self.eps1,
            eps2: self.eps2,
            k1: self.k1,
            k2: self.k2,
        }
    }
}

/// An evaluated LF/HF pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub event_id: u64,
    pub rank: usize,
    pub poe: f64,
    pub lf: f64,
    pub hf: f64,
}

/// Summary of one iteration. Distributions are stored on the comparison grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub n_samples: usize,
    pub new_event_id: Option<u64>,
    pub copula: Option<CopulaFit>,
    pub mpm: f64,
    pub mpm_u95: f64,
    pub grid_mean: Vec<f64>,
    pub grid_lo: Vec<f64>,
    pub grid_hi: Vec<f64>,
    /// Mean absolute change against the previous iteration; undefined at j=1.
    pub change: Option<f64>,
    pub stop_e: Option<f64>,
    #[serde(with = "extended_float")]
    pub stop_c: f64,
    pub clamp_fraction: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Running,
    Converged,
    MaxIterations,
    PoolExhausted,
    Paused,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            RunStatus::Converged | RunStatus::MaxIterations | RunStatus::PoolExhausted
        )
    }
}

/// Complete resumable state of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub method: Method,
    pub config: PasConfig,
    pub status: RunStatus,
    pub selected: Vec<Sample>,
    /// Acquired events still awaiting their HF value, in evaluation order.
    pub pending: Vec<u64>,
    pub history: Vec<IterationRecord>,
}

impl RunState {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Writes the state atomically (temporary file, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json()?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.history.last()
    }
}

/// A predicted HF exceedance curve (ascending PoE) with its 95% band.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub poe: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub mpm: f64,
    pub mpm_u95: f64,
    pub copula: Option<CopulaFit>,
    pub clamp_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub state: RunState,
    pub prediction: Prediction,
}

/// Drives a PAS or AS run over an LF pool.
pub struct Runner<'a> {
    pub pool: &'a LfPool,
    pub pexp: f64,
    pub method: Method,
    pub config: PasConfig,
    pub exec: ExecMode,
    grid: Vec<f64>,
    l_mcs: Vec<f64>,
}

impl<'a> Runner<'a> {
    pub fn new(pool: &'a LfPool, pexp: f64, method: Method, config: PasConfig) -> Result<Self> {
        config.validate()?;
        let grid = comparison_grid(pexp);
        let lo = pool.at_rank(1).poe;
        let hi = pool.at_rank(pool.len()).poe;
        if grid[0] < lo || grid[grid.len() - 1] > hi {
            return Err(PasError::Config(format!(
                "comparison range [{}, {}] is not covered by the LF PoE range [{lo}, {hi}]",
                grid[0],
                grid[grid.len() - 1]
            )));
        }
        Ok(Self {
            pool,
            pexp,
            method,
            config,
            exec: ExecMode::Sequential,
            grid,
            l_mcs: pool.values(),
        })
    }

    pub fn with_exec(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Fresh state with the initial design pending evaluation.
    pub fn initial_state(&self) -> Result<RunState> {
        let ranks = match self.method {
            Method::Pas => initial_sample(self.pool, self.config.m0_total, self.config.m0_top)?,
            Method::As => as_baseline::initial_sample(self.pool, self.pexp)?,
        };
        Ok(RunState {
            method: self.method,
            config: self.config,
            status: RunStatus::Running,
            selected: Vec::new(),
            pending: ranks
                .iter()
                .map(|&r| self.pool.at_rank(r).event_id)
                .collect(),
            history: Vec::new(),
        })
    }

    fn used_ranks(&self, state: &RunState) -> Result<HashSet<usize>> {
        let mut used: HashSet<usize> = state.selected.iter().map(|s| s.rank).collect();
        for id in &state.pending {
            used.insert(self.event(*id)?.rank);
        }
        Ok(used)
    }

    fn event(&self, event_id: u64) -> Result<&LfEvent> {
        self.pool
            .by_id(event_id)
            .ok_or_else(|| PasError::Config(format!("event {event_id} is not part of the LF pool")))
    }

    /// Prediction from the current selected set at iteration `iteration`.
    pub fn predict(&self, state: &RunState, iteration: usize) -> Result<Prediction> {
        match self.method {
            Method::Pas => self.predict_pas(&state.selected, iteration),
            Method::As => {
                as_baseline::predict(self.pool, &state.selected, self.pexp, self.config.rng_seed)
            }
        }
    }

    fn predict_pas(&self, selected: &[Sample], iteration: usize) -> Result<Prediction> {
        let l: Vec<f64> = selected.iter().map(|s| s.lf).collect();
        let h: Vec<f64> = selected.iter().map(|s| s.hf).collect();
        let fit = select_copula(&PseudoObservations::from_samples(&l, &h)?)?;
        let f_l = KernelMarginal::fit(&l, BandwidthRule::Silverman)?;
        let f_h = KernelMarginal::fit(&h, BandwidthRule::Silverman)?;
        let boot = conditional_bootstrap(
            &fit.copula,
            &f_l,
            &f_h,
            &self.l_mcs,
            self.pool.n_w(),
            self.config.z,
            self.config.rng_seed,
            iteration,
            self.exec,
        )?;
        let agg = aggregate_prediction(&boot.draws, self.pexp)?;
        Ok(Prediction {
            poe: agg.mean.poe,
            mean: agg.mean.values,
            lo: agg.lo,
            hi: agg.hi,
            mpm: agg.mpm,
            mpm_u95: agg.mpm_u95,
            copula: Some(fit),
            clamp_fraction: boot.clamp_fraction,
        })
    }

    fn acquire(&self, state: &RunState, prediction: &Prediction) -> Result<usize> {
        let used = self.used_ranks(state)?;
        match self.method {
            Method::Pas => md_acquire(self.pool, &used),
            Method::As => as_baseline::mvpd_acquire(self.pool, &used, prediction, self.pexp),
        }
    }

    fn check_state(&self, state: &RunState) -> Result<()> {
        if state.method != self.method {
            return Err(PasError::Config(format!(
                "checkpoint belongs to a {} run, not {}",
                state.method, self.method
            )));
        }
        if state.config != self.config {
            return Err(PasError::Config(
                "checkpoint configuration differs from this run".into(),
            ));
        }
        Ok(())
    }

    /// Runs from `state` until convergence, the iteration cap, pool
    /// exhaustion, or the iteration `pause_after`. `checkpoint` is called
    /// after every HF evaluation and every completed iteration.
    pub fn run(
        &self,
        mut state: RunState,
        hf: &mut dyn HfEvaluator,
        checkpoint: &mut dyn FnMut(&RunState) -> Result<()>,
        pause_after: Option<usize>,
    ) -> Result<RunOutcome> {
        self.check_state(&state)?;
        if state.status == RunStatus::Paused {
            state.status = RunStatus::Running;
        }
        if state.status.is_terminal() {
            let prediction = self.predict(&state, state.history.len().max(1))?;
            return Ok(RunOutcome {
                status: state.status,
                state,
                prediction,
            });
        }
        let rule = self.config.stopping_rule();
        loop {
            while let Some(&id) = state.pending.first() {
                let event = *self.event(id)?;
                let value = hf.evaluate(&event)?;
                if !value.is_finite() {
                    return Err(PasError::HfEvaluation {
                        event_id: id,
                        reason: format!("non-finite HF value {value}"),
                    });
                }
                state.selected.push(Sample {
                    event_id: id,
                    rank: event.rank,
                    poe: event.poe,
                    lf: event.value,
                    hf: value,
                });
                state.pending.remove(0);
                checkpoint(&state)?;
            }

            let j = state.history.len() + 1;
            let prediction = self.predict(&state, j)?;
            let grid_mean = on_grid(&prediction.poe, &prediction.mean, &self.grid)?;
            let grid_lo = on_grid(&prediction.poe, &prediction.lo, &self.grid)?;
            let grid_hi = on_grid(&prediction.poe, &prediction.hi, &self.grid)?;
            let change = state
                .last()
                .map(|prev| mean_abs_change(&prev.grid_mean, &grid_mean));
            let mut changes: Vec<Option<f64>> = state.history.iter().map(|r| r.change).collect();
            changes.push(change);
            let mut mpms: Vec<f64> = state.history.iter().map(|r| r.mpm).collect();
            mpms.push(prediction.mpm);
            let (stop_e, stop_c) = window_metrics(&changes, &mpms, self.config.k1, self.config.k2);
            let warning = (prediction.clamp_fraction > CLAMP_WARNING_FRACTION).then(|| {
                format!(
                    "{:.1}% of bootstrap draws were clamped at the marginal range",
                    100.0 * prediction.clamp_fraction
                )
            });
            state.history.push(IterationRecord {
                iteration: j,
                n_samples: state.selected.len(),
                new_event_id: if j == 1 {
                    None
                } else {
                    state.selected.last().map(|s| s.event_id)
                },
                copula: prediction.copula,
                mpm: prediction.mpm,
                mpm_u95: prediction.mpm_u95,
                grid_mean,
                grid_lo,
                grid_hi,
                change,
                stop_e,
                stop_c,
                clamp_fraction: prediction.clamp_fraction,
                warning,
            });

            if rule.should_stop(j, stop_e, stop_c) {
                state.status = RunStatus::Converged;
            } else if j >= self.config.max_iterations {
                state.status = RunStatus::MaxIterations;
            } else {
                match self.acquire(&state, &prediction) {
                    Ok(rank) => state.pending.push(self.pool.at_rank(rank).event_id),
                    Err(PasError::PoolExhausted { .. }) => state.status = RunStatus::PoolExhausted,
                    Err(e) => return Err(e),
                }
            }
            checkpoint(&state)?;
            if state.status.is_terminal() {
                return Ok(RunOutcome {
                    status: state.status,
                    state,
                    prediction,
                });
            }
            if pause_after == Some(j) {
                state.status = RunStatus::Paused;
                return Ok(RunOutcome {
                    status: RunStatus::Paused,
                    state,
                    prediction,
                });
            }
        }
    }
}

/// Convenience wrapper: a full run from the initial design without
/// checkpointing.
pub fn run_method(
    pool: &LfPool,
    pexp: f64,
    method: Method,
    config: PasConfig,
    hf: &mut dyn HfEvaluator,
) -> Result<RunOutcome> {
    let runner = Runner::new(pool, pexp, method, config)?;
    let state = runner.initial_state()?;
    runner.run(state, hf, &mut |_| Ok(()), None)
}
