use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ingest::BatchOutcome;

/// Stage timing of one ingested batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchTiming {
    #[serde(with = "crate::clock::serde_secs")]
    pub location: Duration,
    /// Present only when the VLM was called.
    #[serde(default, with = "opt_secs", skip_serializing_if = "Option::is_none")]
    pub vlm: Option<Duration>,
    #[serde(with = "crate::clock::serde_secs")]
    pub total: Duration,
    pub record_created: bool,
}

impl BatchTiming {
    pub fn from_outcome(outcome: &BatchOutcome) -> Self {
        Self {
            location: outcome.timings.location,
            vlm: outcome.hands.then_some(outcome.timings.vlm),
            total: outcome.timings.total,
            record_created: outcome.record.is_some(),
        }
    }
}

mod opt_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&d.as_secs_f64()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.map(Duration::from_secs_f64))
    }
}

/// Everything the latency report is computed from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingLog {
    pub batches: Vec<BatchTiming>,
    #[serde(with = "secs_vec")]
    pub queries: Vec<Duration>,
}

mod secs_vec {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(d: &[Duration], s: S) -> Result<S::Ok, S::Error> {
        d.iter().map(Duration::as_secs_f64).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Duration>, D::Error> {
        Ok(Vec::<f64>::deserialize(d)?.into_iter().map(Duration::from_secs_f64).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean_s: f64,
    /// Sample standard deviation; 0 for fewer than two samples.
    pub sd_s: f64,
    pub calls: usize,
}

impl StageStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean_s: 0.0,
                sd_s: 0.0,
                calls: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self {
            mean_s: mean,
            sd_s: sd,
            calls: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Location estimate per batch.
    pub locations: StageStats,
    /// VLM description per gated-in batch.
    pub vlm: StageStats,
    /// Full processing of each batch that produced a diary record.
    pub total_time: StageStats,
    pub query_response: StageStats,
}

pub fn latency_report(log: &TimingLog) -> Result<LatencyReport, EvalError> {
    if log.batches.is_empty() && log.queries.is_empty() {
        return Err(EvalError::NoData);
    }
    let secs = |it: &mut dyn Iterator<Item = Duration>| it.map(|d| d.as_secs_f64()).collect::<Vec<_>>();
    Ok(LatencyReport {
        locations: StageStats::from_samples(&secs(&mut log.batches.iter().map(|b| b.location))),
        vlm: StageStats::from_samples(&secs(&mut log.batches.iter().filter_map(|b| b.vlm))),
        total_time: StageStats::from_samples(&secs(
            &mut log.batches.iter().filter(|b| b.record_created).map(|b| b.total),
        )),
        query_response: StageStats::from_samples(&secs(&mut log.queries.iter().copied())),
    })
}

impl fmt::Display for LatencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols = [&self.locations, &self.vlm, &self.total_time];
        writeln!(f, "{:<24}{:>12}{:>12}{:>12}", "", "Locations", "VLM", "Total Time")?;
        write!(f, "{:<24}", "Mean Process Time (s)")?;
        for c in cols {
            write!(f, "{:>12.3}", c.mean_s)?;
        }
        writeln!(f)?;
        write!(f, "{:<24}", "Stdev")?;
        for c in cols {
            write!(f, "{:>12.3}", c.sd_s)?;
        }
        writeln!(f)?;
        write!(f, "{:<24}", "Total Process Calls")?;
        for c in cols {
            write!(f, "{:>12}", c.calls)?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "Query-response time: mean {:.3} s, SD {:.3} s over {} interactions",
            self.query_response.mean_s, self.query_response.sd_s, self.query_response.calls
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_mean_and_sd() {
        let log = TimingLog {
            batches: vec![],
            queries: vec![Duration::from_secs_f64(2.0), Duration::from_secs_f64(2.34)],
        };
        let r = latency_report(&log).unwrap();
        assert!((r.query_response.mean_s - 2.17).abs() < 1e-12);
        // sample SD of two points is |a - b| / sqrt(2)
        assert!((r.query_response.sd_s - 0.34 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.locations.calls, 0);
    }

    #[test]
    fn single_sample_and_empty() {
        assert_eq!(StageStats::from_samples(&[3.0]).sd_s, 0.0);
        assert!(matches!(latency_report(&TimingLog::default()), Err(EvalError::NoData)));
    }

    #[test]
    fn rows_follow_stage_membership() {
        let b = |vlm: Option<f64>, created| BatchTiming {
            location: Duration::from_millis(400),
            vlm: vlm.map(Duration::from_secs_f64),
            total: Duration::from_secs(5),
            record_created: created,
        };
        let log = TimingLog {
            batches: vec![b(None, false), b(Some(4.0), true), b(Some(6.0), false)],
            queries: vec![],
        };
        let r = latency_report(&log).unwrap();
        assert_eq!((r.locations.calls, r.vlm.calls, r.total_time.calls), (3, 2, 1));
        assert!((r.vlm.mean_s - 5.0).abs() < 1e-12);
        let text = r.to_string();
        assert!(text.lines().next().unwrap().contains("Total Time"));
        assert!(text.contains("Mean Process Time (s)"));
    }
}
