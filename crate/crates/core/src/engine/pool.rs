use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::empirical::ExceedanceDistribution;
use crate::error::{PasError, Result};
use crate::signals::PeakSeries;

/// One LF Monte-Carlo peak, addressed by its descending rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfEvent {
    pub event_id: u64,
    pub time: f64,
    pub value: f64,
    /// 1-based rank in the descending LF order.
    pub rank: usize,
    pub poe: f64,
}

/// The LF MCS sample pool sorted by descending value.
#[derive(Debug, Clone)]
pub struct LfPool {
    events: Vec<LfEvent>,
    by_id: HashMap<u64, usize>,
    n_w: u64,
}

impl LfPool {
    pub fn new(peaks: &PeakSeries, n_w: u64) -> Result<Self> {
        let n = peaks.len();
        if n == 0 {
            return Err(PasError::InsufficientData { needed: 1, got: 0 });
        }
        if n as u64 > n_w {
            return Err(PasError::Domain(format!(
                "{n} peaks exceed the encounter count {n_w}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            peaks.values[b]
                .total_cmp(&peaks.values[a])
                .then(peaks.event_ids[a].cmp(&peaks.event_ids[b]))
        });
        let events: Vec<LfEvent> = order
            .iter()
            .enumerate()
            .map(|(k, &i)| LfEvent {
                event_id: peaks.event_ids[i],
                time: peaks.times[i],
                value: peaks.values[i],
                rank: k + 1,
                poe: (k + 1) as f64 / n_w as f64,
            })
            .collect();
        let by_id = events
            .iter()
            .enumerate()
            .map(|(k, e)| (e.event_id, k))
            .collect();
        Ok(Self { events, by_id, n_w })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn n_w(&self) -> u64 {
        self.n_w
    }

    /// Event at 1-based rank.
    pub fn at_rank(&self, rank: usize) -> &LfEvent {
        &self.events[rank - 1]
    }

    pub fn by_id(&self, event_id: u64) -> Option<&LfEvent> {
        self.by_id.get(&event_id).map(|&k| &self.events[k])
    }

    pub fn events(&self) -> &[LfEvent] {
        &self.events
    }

    /// LF values in descending order.
    pub fn values(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.value).collect()
    }

    pub fn distribution(&self) -> ExceedanceDistribution {
        ExceedanceDistribution {
            poe: self.events.iter().map(|e| e.poe).collect(),
            values: self.values(),
            n_w: self.n_w,
        }
    }
}
