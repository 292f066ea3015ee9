//! Efficiency and accuracy metrics of a screening run against an oracle.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::empirical::{interp_ln_poe, ExceedanceDistribution};
use crate::engine::{comparison_grid, Method, RunState, RunStatus};
use crate::error::{PasError, Result};

/// HF event duration assumed when estimating HF simulation time [s].
pub const HF_EVENT_DURATION: f64 = 20.0;

/// Fraction of the encounters evaluated with the HF model.
pub fn compute_m1(n_c: usize, n_w: u64) -> Result<f64> {
    if n_c == 0 || n_c as u64 > n_w {
        return Err(PasError::Domain(format!(
            "need 0 < n_c <= n_w, got n_c={n_c}, n_w={n_w}"
        )));
    }
    Ok(n_c as f64 / n_w as f64)
}

/// Signed relative MPM error; negative is non-conservative.
pub fn compute_m2(mpm_pred: f64, mpm_true: f64) -> Result<f64> {
    if mpm_true == 0.0 || !mpm_true.is_finite() {
        return Err(PasError::Domain(format!(
            "reference MPM must be finite and non-zero, got {mpm_true}"
        )));
    }
    Ok((mpm_pred - mpm_true) / mpm_true)
}

/// Largest deviation between two curves on the comparison grid around
/// `pexp`, returned signed and normalised by `mpm_true`. Curves are given as
/// ascending PoE with values, interpolated in ln(PoE).
pub fn compute_m3(
    pred_poe: &[f64],
    pred_values: &[f64],
    truth: &ExceedanceDistribution,
    pexp: f64,
    mpm_true: f64,
) -> Result<f64> {
    if mpm_true == 0.0 || !mpm_true.is_finite() {
        return Err(PasError::Domain(format!(
            "reference MPM must be finite and non-zero, got {mpm_true}"
        )));
    }
    let grid = comparison_grid(pexp);
    let mut worst = 0.0f64;
    for &p in &grid {
        let d = interp_ln_poe(pred_poe, pred_values, p)? - truth.value_at_poe(p)?;
        if d.abs() > worst.abs() {
            worst = d;
        }
    }
    Ok(worst / mpm_true)
}

/// Outcome of one method on one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub case: String,
    pub status: RunStatus,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub n_c: usize,
    pub n_w: u64,
    pub iterations: usize,
    pub mpm_pred: f64,
    pub mpm_u95: f64,
    pub mpm_true: f64,
}

impl MethodReport {
    /// Scores the final iteration of a run. The M3 curve is the stored
    /// comparison-grid mean of that iteration.
    pub fn from_state(
        case: &str,
        state: &RunState,
        truth: &ExceedanceDistribution,
        pexp: f64,
        mpm_true: f64,
    ) -> Result<Self> {
        let last = state
            .last()
            .ok_or_else(|| PasError::Domain("run has no completed iteration".into()))?;
        let grid = comparison_grid(pexp);
        Ok(Self {
            method: state.method,
            case: case.to_string(),
            status: state.status,
            m1: compute_m1(last.n_samples, truth.n_w)?,
            m2: compute_m2(last.mpm, mpm_true)?,
            m3: compute_m3(&grid, &last.grid_mean, truth, pexp, mpm_true)?,
            n_c: last.n_samples,
            n_w: truth.n_w,
            iterations: last.iteration,
            mpm_pred: last.mpm,
            mpm_u95: last.mpm_u95,
            mpm_true,
        })
    }

    /// Estimated HF simulation time for the evaluated events [s].
    pub fn hf_duration(&self) -> f64 {
        self.n_c as f64 * HF_EVENT_DURATION
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Convergence trajectory: MPM and its U95 band against the sample count.
pub fn trajectory_csv(state: &RunState) -> String {
    let mut out = String::from("iteration,n_samples,mpm,u95_lo,u95_hi\n");
    for r in &state.history {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration,
            r.n_samples,
            r.mpm,
            r.mpm - r.mpm_u95,
            r.mpm + r.mpm_u95
        );
    }
    out
}

/// Full per-iteration history including the stopping metrics.
pub fn history_csv(state: &RunState) -> String {
    let mut out = String::from(
        "iteration,n_samples,new_event_id,copula,mpm,mpm_u95,change,stop_e,stop_c,clamp_fraction\n",
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &state.history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.n_samples,
            r.new_event_id.map(|v| v.to_string()).unwrap_or_default(),
            r.copula
                .as_ref()
                .map(|c| c.copula.family.to_string())
                .unwrap_or_default(),
            r.mpm,
            r.mpm_u95,
            opt(r.change),
            opt(r.stop_e),
            r.stop_c,
            r.clamp_fraction
        );
    }
    out
}

/// Comparison table with one row per report.
pub fn combined_csv(reports: &[MethodReport]) -> String {
    let mut out = String::from(
        "case,method,status,mpm_pred,mpm_u95,mpm_true,n_c,n_w,hf_duration_s,m1,m2,m3\n",
    );
    for r in reports {
        let status = serde_json::to_value(r.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.case,
            r.method,
            status,
            r.mpm_pred,
            r.mpm_u95,
            r.mpm_true,
            r.n_c,
            r.n_w,
            r.hf_duration(),
            r.m1,
            r.m2,
            r.m3
        );
    }
    out
}
