//! Tracking-error statistics: per-instance horizontal errors, their
//! empirical CDF, and nearest-rank percentiles.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::caf::InstanceTiming;
use crate::error::{Error, Result};
use crate::scenario::{GroundTruthTrack, Position2D};
use crate::tracking::TrackEstimate;

/// Which evaluation scenario produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioLabel {
    /// Dead reckoning seeded with the true initial position.
    PerfectInit,
    /// Dead reckoning seeded with a bearing-noise triangulation fix.
    NoisyInit,
    /// Doppler taken from the strongest CAF bin with no track filtering.
    BaselineMaxpeak,
    /// Per-instance angle-of-arrival triangulation without dead reckoning.
    AoaTriangulation,
}

impl std::fmt::Display for ScenarioLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScenarioLabel::PerfectInit => "perfect_init",
            ScenarioLabel::NoisyInit => "noisy_init",
            ScenarioLabel::BaselineMaxpeak => "baseline_maxpeak",
            ScenarioLabel::AoaTriangulation => "aoa_triangulation",
        };
        write!(f, "{s}")
    }
}

/// Horizontal error at one detection instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceError {
    pub k: usize,
    pub time_s: f64,
    pub error_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentilePoint {
    pub q: f64,
    pub value_m: f64,
}

/// Error statistics for one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub scenario: ScenarioLabel,
    pub instances: Vec<InstanceError>,
    pub sorted_errors_m: Vec<f64>,
    pub percentiles: Vec<PercentilePoint>,
}

impl ErrorReport {
    pub fn new(
        scenario: ScenarioLabel,
        instances: Vec<InstanceError>,
        percentile_qs: &[f64],
    ) -> Result<ErrorReport> {
        if instances.is_empty() {
            return Err(Error::EmptyReport);
        }
        let mut sorted: Vec<f64> = instances.iter().map(|e| e.error_m).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut report = ErrorReport {
            scenario,
            instances,
            sorted_errors_m: sorted,
            percentiles: vec![],
        };
        report.percentiles = percentile_qs
            .iter()
            .map(|&q| {
                Ok(PercentilePoint {
                    q,
                    value_m: percentile(&report, q)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(report)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn mean_error_m(&self) -> f64 {
        self.sorted_errors_m.iter().sum::<f64>() / self.sorted_errors_m.len() as f64
    }

    pub fn max_error_m(&self) -> f64 {
        *self.sorted_errors_m.last().unwrap()
    }
}

/// Nearest-rank percentile of the report's error distribution.
/// `q` is in percent; `q = 50` is the median, `q = 100` the maximum.
pub fn percentile(report: &ErrorReport, q: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::Config(format!(
            "percentile must lie in [0, 100], got {q}"
        )));
    }
    let n = report.sorted_errors_m.len();
    if n == 0 {
        return Err(Error::EmptyReport);
    }
    let rank = ((q * n as f64 / 100.0) - 1e-9).ceil().max(1.0) as usize;
    Ok(report.sorted_errors_m[rank.min(n) - 1])
}

/// Compares a dead-reckoned estimate against the ground-truth track.
pub fn tracking_errors(
    estimate: &TrackEstimate,
    truth: &GroundTruthTrack,
    timing: &InstanceTiming,
    scenario: ScenarioLabel,
    percentile_qs: &[f64],
) -> Result<ErrorReport> {
    if estimate.points.is_empty() {
        return Err(Error::EmptyReport);
    }
    let instances = estimate
        .points
        .iter()
        .map(|p| {
            let time_s = timing.time_s(p.k);
            let truth_pos = truth.position_at(time_s)?;
            Ok(InstanceError {
                k: p.k,
                time_s,
                error_m: p.position.distance_to(truth_pos),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ErrorReport::new(scenario, instances, percentile_qs)
}

/// Compares per-instance position fixes against the ground-truth track.
pub fn position_errors(
    fixes: &[(usize, f64, Position2D)],
    truth: &GroundTruthTrack,
    scenario: ScenarioLabel,
    percentile_qs: &[f64],
) -> Result<ErrorReport> {
    if fixes.is_empty() {
        return Err(Error::EmptyReport);
    }
    let instances = fixes
        .iter()
        .map(|&(k, time_s, pos)| {
            let truth_pos = truth.position_at(time_s)?;
            Ok(InstanceError {
                k,
                time_s,
                error_m: pos.distance_to(truth_pos),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ErrorReport::new(scenario, instances, percentile_qs)
}

/// Writes per-instance errors as `k,time_s,error_m`.
pub fn write_errors_csv(path: &Path, report: &ErrorReport) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "k,time_s,error_m")?;
    for e in &report.instances {
        writeln!(out, "{},{:.6},{:.9}", e.k, e.time_s, e.error_m)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the empirical CDF as `error_m,cdf`.
pub fn write_cdf_csv(path: &Path, report: &ErrorReport) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "error_m,cdf")?;
    let n = report.sorted_errors_m.len() as f64;
    for (i, e) in report.sorted_errors_m.iter().enumerate() {
        writeln!(out, "{:.9},{:.9}", e, (i + 1) as f64 / n)?;
    }
    out.flush()?;
    Ok(())
}
