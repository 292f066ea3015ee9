use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use super::pool::LfEvent;
use crate::error::{PasError, Result};

/// Source of high-fidelity peak values, one LF event at a time. Must return
/// the same value for the same event within a run.
pub trait HfEvaluator {
    fn evaluate(&mut self, event: &LfEvent) -> Result<f64>;
}

/// HF values looked up from a matched validation dataset.
#[derive(Debug, Clone, Default)]
pub struct MatchedDataset {
    values: HashMap<u64, f64>,
}

impl MatchedDataset {
    pub fn new(event_ids: &[u64], values: &[f64]) -> Result<Self> {
        if event_ids.len() != values.len() {
            return Err(PasError::Domain("event id and value counts differ".into()));
        }
        Ok(Self {
            values: event_ids
                .iter()
                .copied()
                .zip(values.iter().copied())
                .collect(),
        })
    }
}

impl HfEvaluator for MatchedDataset {
    fn evaluate(&mut self, event: &LfEvent) -> Result<f64> {
        self.values
            .get(&event.event_id)
            .copied()
            .ok_or(PasError::HfEvaluation {
                event_id: event.event_id,
                reason: "event not present in the matched dataset".into(),
            })
    }
}

/// Samples `(time, value)` of the LF record around an event.
pub type WindowFn<'a> = Box<dyn Fn(&LfEvent) -> Vec<(f64, f64)> + 'a>;

/// File-based handshake with an external HF solver.
///
/// For each event the engine writes `hf_request_<event>.csv` holding the LF
/// record window (`event_id,time,value`) and waits for
/// `hf_response_<event>.csv` with header `event_id,value` and one data row.
pub struct ExternalHandshake<'a> {
    pub dir: PathBuf,
    pub poll_interval: Duration,
    pub timeout: Duration,
    pub window: Option<WindowFn<'a>>,
}

impl ExternalHandshake<'_> {
    pub fn new(dir: impl Into<PathBuf>, timeout: Duration) -> Self {
        Self {
            dir: dir.into(),
            poll_interval: Duration::from_millis(50),
            timeout,
            window: None,
        }
    }

    pub fn request_path(&self, event_id: u64) -> PathBuf {
        self.dir.join(format!("hf_request_{event_id}.csv"))
    }

    pub fn response_path(&self, event_id: u64) -> PathBuf {
        self.dir.join(format!("hf_response_{event_id}.csv"))
    }

    fn write_request(&self, event: &LfEvent) -> Result<()> {
        let samples = match &self.window {
            Some(f) => f(event),
            None => vec![(event.time, event.value)],
        };
        let mut out = String::from("event_id,time,value\n");
        for (t, v) in samples {
            let _ = writeln!(out, "{},{t},{v}", event.event_id);
        }
        fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!(".hf_request_{}.tmp", event.event_id));
        fs::write(&tmp, out)?;
        fs::rename(tmp, self.request_path(event.event_id))?;
        Ok(())
    }
}

/// Parses a response file body; `Ok(None)` while the file is incomplete.
pub fn parse_response(body: &str, event_id: u64) -> Result<Option<f64>> {
    let mut lines = body.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        return Ok(None);
    };
    if header.trim() != "event_id,value" {
        return Err(PasError::Parse(format!(
            "unexpected response header '{header}'"
        )));
    }
    let Some(row) = lines.next() else {
        return Ok(None);
    };
    let (id, value) = row
        .split_once(',')
        .ok_or_else(|| PasError::Parse(format!("malformed response row '{row}'")))?;
    let id: u64 = id
        .trim()
        .parse()
        .map_err(|_| PasError::Parse(format!("bad event id '{id}'")))?;
    if id != event_id {
        return Err(PasError::HfEvaluation {
            event_id,
            reason: format!("response is for event {id}"),
        });
    }
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| PasError::Parse(format!("bad HF value '{value}'")))?;
    if !value.is_finite() {
        return Err(PasError::HfEvaluation {
            event_id,
            reason: "non-finite HF value".into(),
        });
    }
    Ok(Some(value))
}

impl HfEvaluator for ExternalHandshake<'_> {
    fn evaluate(&mut self, event: &LfEvent) -> Result<f64> {
        let response = self.response_path(event.event_id);
        if !response.exists() {
            self.write_request(event)?;
        }
        let start = Instant::now();
        loop {
            if let Ok(body) = fs::read_to_string(&response) {
                if let Some(v) = parse_response(&body, event.event_id)? {
                    return Ok(v);
                }
            }
            if start.elapsed() >= self.timeout {
                return Err(PasError::HfTimeout {
                    event_id: event.event_id,
                });
            }
            std::thread::sleep(self.poll_interval);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(id: u64) -> LfEvent {
        LfEvent {
            event_id: id,
            time: 12.5,
            value: 3.0,
            rank: 1,
            poe: 0.01,
        }
    }

    #[test]
    fn response_parsing() {
        assert_eq!(
            parse_response("event_id,value\n7,2.5\n", 7).unwrap(),
            Some(2.5)
        );
        assert_eq!(parse_response("event_id,value\n", 7).unwrap(), None);
        assert!(parse_response("event_id,value\n8,2.5\n", 7).is_err());
        assert!(parse_response("id,v\n7,1\n", 7).is_err());
    }

    #[test]
    fn handshake_round_trip_and_timeout() {
        let dir = tempfile::tempdir().unwrap();
        let mut hs = ExternalHandshake::new(dir.path(), Duration::from_millis(120));
        hs.poll_interval = Duration::from_millis(10);
        assert!(matches!(
            hs.evaluate(&event(4)),
            Err(PasError::HfTimeout { event_id: 4 })
        ));
        let req = fs::read_to_string(hs.request_path(4)).unwrap();
        assert_eq!(req, "event_id,time,value\n4,12.5,3\n");
        fs::write(hs.response_path(4), "event_id,value\n4,9.75\n").unwrap();
        assert_eq!(hs.evaluate(&event(4)).unwrap(), 9.75);
    }

    #[test]
    fn matched_lookup() {
        let mut m = MatchedDataset::new(&[1, 2], &[10.0, 20.0]).unwrap();
        assert_eq!(m.evaluate(&event(2)).unwrap(), 20.0);
        assert!(m.evaluate(&event(3)).is_err());
    }
}
