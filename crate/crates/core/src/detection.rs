//! Doppler detection and track filtering on CAF map sequences.
//!
//! Each detection instance yields a set of threshold crossings. The track
//! filter turns those sets into a single Doppler estimate per instance: a
//! lone crossing is taken as-is, multiple crossings are blended with the
//! previous estimate through magnitude weighting, and empty sets are bridged
//! by linear interpolation toward the next lone crossing. A constant-velocity
//! Kalman filter then smooths the estimates into the sequence handed to the
//! trajectory solver.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::caf::{CafMap, InstanceTiming};
use crate::error::{Error, Result};
use crate::scenario::ReceiverId;

/// Adaptive threshold settings.
///
/// The threshold for a bin is `gamma` times the mean CAF magnitude over the
/// `2 * neighbor_half_width + 1` bins centered on it; at the map edges the
/// window is truncated and the mean renormalized. Setting
/// `exclude_cell_under_test` removes the centre bin from the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdParams {
    pub gamma: f64,
    pub neighbor_half_width: usize,
    #[serde(default)]
    pub exclude_cell_under_test: bool,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        ThresholdParams {
            gamma: 3.0,
            neighbor_half_width: 25,
            exclude_cell_under_test: false,
        }
    }
}

impl ThresholdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return Err(Error::Config(format!(
                "threshold factor must exceed 1, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// One threshold crossing: a Doppler frequency and its CAF magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frequency_hz: f64,
    pub magnitude: f64,
}

/// All crossings of one detection instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub k: usize,
    pub receiver_id: Option<ReceiverId>,
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn with_receiver(mut self, id: ReceiverId) -> Self {
        self.receiver_id = Some(id);
        self
    }
}

/// Thresholds one CAF map and merges contiguous crossings into peaks.
///
/// Runs of adjacent bins above threshold collapse to the bin with the largest
/// magnitude, so one spectral peak yields one detection.
pub fn adaptive_threshold_detect(caf: &CafMap, params: &ThresholdParams) -> Result<DetectionSet> {
    params.validate()?;
    let mags = &caf.magnitudes;
    let n = mags.len();
    let window = 2 * params.neighbor_half_width + 1;
    if window > n {
        return Err(Error::Config(format!(
            "threshold window of {window} bins exceeds the {n}-bin map"
        )));
    }

    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &m in mags {
        prefix.push(prefix.last().unwrap() + m);
    }

    let mut above = vec![false; n];
    for b in 0..n {
        let lo = b.saturating_sub(params.neighbor_half_width);
        let hi = (b + params.neighbor_half_width).min(n - 1);
        let mut sum = prefix[hi + 1] - prefix[lo];
        let mut count = hi + 1 - lo;
        if params.exclude_cell_under_test {
            sum -= mags[b];
            count -= 1;
        }
        if count == 0 {
            continue;
        }
        let beta = params.gamma * sum / count as f64;
        above[b] = mags[b] >= beta;
    }

    let mut detections = Vec::new();
    let mut b = 0;
    while b < n {
        if !above[b] {
            b += 1;
            continue;
        }
        let start = b;
        while b < n && above[b] {
            b += 1;
        }
        let peak = (start..b)
            .max_by(|&i, &j| mags[i].partial_cmp(&mags[j]).unwrap())
            .unwrap();
        detections.push(Detection {
            frequency_hz: caf.frequency_hz(peak),
            magnitude: mags[peak],
        });
    }
    Ok(DetectionSet {
        k: caf.k,
        receiver_id: None,
        detections,
    })
}

/// Doppler of the single largest CAF magnitude, ignoring thresholds.
///
/// This is the classical per-instance estimator the track filter is compared
/// against; it has no continuity and follows whichever peak is strongest.
pub fn max_peak_baseline(caf: &CafMap) -> Result<f64> {
    let best = caf
        .magnitudes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .ok_or(Error::NoSignal)?;
    if *best.1 <= 0.0 {
        return Err(Error::NoSignal);
    }
    Ok(caf.frequency_hz(best.0))
}

/// Baseline Doppler track taking the strongest CAF peak at every instance.
pub fn max_peak_track(maps: &[CafMap], receiver_id: ReceiverId) -> Result<DopplerTrack> {
    let entries = maps
        .iter()
        .map(|m| {
            Ok(DopplerEstimate {
                k: m.k,
                f_hat_hz: max_peak_baseline(m)?,
                provenance: Provenance::Measured,
                f_tilde_hz: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DopplerTrack {
        receiver_id: Some(receiver_id),
        entries,
        holds: vec![],
    })
}

/// Track filter settings; `alpha` weights the previous estimate when an
/// instance holds multiple detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    pub alpha: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams { alpha: 0.7 }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "filter memory alpha must lie in [0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// How a per-instance Doppler estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// A single detection was used directly.
    Measured,
    /// Multiple detections were blended with the previous estimate.
    Averaged,
    /// An empty instance was bridged toward the next single detection, or
    /// held when no such anchor exists.
    Interpolated,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Measured => write!(f, "measured"),
            Provenance::Averaged => write!(f, "averaged"),
            Provenance::Interpolated => write!(f, "interpolated"),
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "measured" => Ok(Provenance::Measured),
            "averaged" => Ok(Provenance::Averaged),
            "interpolated" => Ok(Provenance::Interpolated),
            other => Err(Error::Config(format!("unknown provenance {other:?}"))),
        }
    }
}

/// Filtered (and optionally smoothed) Doppler estimate at one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerEstimate {
    pub k: usize,
    pub f_hat_hz: f64,
    pub provenance: Provenance,
    pub f_tilde_hz: Option<f64>,
}

impl DopplerEstimate {
    /// Smoothed value when present, otherwise the filtered one.
    pub fn smoothed(&self) -> f64 {
        self.f_tilde_hz.unwrap_or(self.f_hat_hz)
    }
}

/// Single-receiver Doppler history over a contiguous run of instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DopplerTrack {
    pub receiver_id: Option<ReceiverId>,
    pub entries: Vec<DopplerEstimate>,
    /// Instances whose value was held because no later anchor existed.
    pub holds: Vec<usize>,
}

impl DopplerTrack {
    pub fn entries(&self) -> &[DopplerEstimate] {
        &self.entries
    }

    pub fn first_k(&self) -> Option<usize> {
        self.entries.first().map(|e| e.k)
    }

    pub fn last_k(&self) -> Option<usize> {
        self.entries.last().map(|e| e.k)
    }

    /// Copy of the track restricted to instances in `[start_k, end_k]`.
    pub fn slice(&self, start_k: usize, end_k: usize) -> DopplerTrack {
        DopplerTrack {
            receiver_id: self.receiver_id,
            entries: self
                .entries
                .iter()
                .filter(|e| (start_k..=end_k).contains(&e.k))
                .copied()
                .collect(),
            holds: self
                .holds
                .iter()
                .filter(|k| (start_k..=end_k).contains(k))
                .copied()
                .collect(),
        }
    }

    fn ensure_contiguous(&self) -> Result<()> {
        for pair in self.entries.windows(2) {
            if pair[1].k != pair[0].k + 1 {
                return Err(Error::NonContiguousTrack { at: pair[1].k });
            }
        }
        Ok(())
    }
}

/// Collapses per-instance detection sets into one Doppler value each.
///
/// The track anchors at the first instance with exactly one detection;
/// earlier instances are dropped. From there on:
///
/// * one detection: take it directly;
/// * several: blend the magnitude-weighted mean of the detections with the
///   previous estimate, `alpha` on the old value;
/// * none: step linearly from the previous estimate toward the next instance
///   with a single detection, or hold the previous value (and record the
///   instance in `holds`) when no such instance follows.
pub fn track_filter(sets: &[DetectionSet], params: &FilterParams) -> Result<DopplerTrack> {
    params.validate()?;
    for pair in sets.windows(2) {
        if pair[1].k != pair[0].k + 1 {
            return Err(Error::NonContiguousTrack { at: pair[1].k });
        }
    }
    let receiver_id = sets.iter().find_map(|s| s.receiver_id);
    let anchor = sets
        .iter()
        .position(|s| s.detections.len() == 1)
        .ok_or(Error::UnrecoverableTrack)?;

    // For each position, the next one at or after it holding a single
    // detection.
    let mut next_single = vec![usize::MAX; sets.len() + 1];
    for i in (0..sets.len()).rev() {
        next_single[i] = if sets[i].detections.len() == 1 {
            i
        } else {
            next_single[i + 1]
        };
    }

    let mut entries: Vec<DopplerEstimate> = Vec::with_capacity(sets.len() - anchor);
    let mut holds = Vec::new();
    let mut prev = sets[anchor].detections[0].frequency_hz;
    for (i, set) in sets.iter().enumerate().skip(anchor) {
        let (value, provenance) = match set.detections.len() {
            1 => (set.detections[0].frequency_hz, Provenance::Measured),
            0 => {
                let l = next_single[i];
                if l == usize::MAX {
                    holds.push(set.k);
                    (prev, Provenance::Interpolated)
                } else {
                    let anchor_f = sets[l].detections[0].frequency_hz;
                    let gap = (l - i + 1) as f64;
                    (prev + (anchor_f - prev) / gap, Provenance::Interpolated)
                }
            }
            _ => {
                let total: f64 = set.detections.iter().map(|d| d.magnitude).sum();
                let weighted: f64 = set
                    .detections
                    .iter()
                    .map(|d| d.magnitude / total * d.frequency_hz)
                    .sum();
                (
                    params.alpha * prev + (1.0 - params.alpha) * weighted,
                    Provenance::Averaged,
                )
            }
        };
        entries.push(DopplerEstimate {
            k: set.k,
            f_hat_hz: value,
            provenance,
            f_tilde_hz: None,
        });
        prev = value;
    }
    Ok(DopplerTrack {
        receiver_id,
        entries,
        holds,
    })
}

/// Constant-velocity Kalman smoother settings.
///
/// The state is Doppler and Doppler rate. `process_noise` is the white
/// jerk-like spectral density driving the rate; `measurement_var` defaults to
/// the half-bin quantization variance of a 2 Hz CAF grid. Interpolated track
/// entries carry `interpolated_inflation` times the measurement variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig {
    pub td_s: f64,
    pub process_noise: f64,
    pub measurement_var: f64,
    pub interpolated_inflation: f64,
    pub initial_freq_var: f64,
    pub initial_rate_var: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            td_s: 0.05,
            process_noise: 4.0,
            measurement_var: 1.0,
            interpolated_inflation: 4.0,
            initial_freq_var: 1.0,
            initial_rate_var: 400.0,
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.td_s > 0.0) {
            return Err(Error::Config(format!(
                "smoother step must be positive, got {}",
                self.td_s
            )));
        }
        if self.process_noise < 0.0 || !(self.measurement_var > 0.0) {
            return Err(Error::Config(
                "process noise must be non-negative and measurement variance positive".into(),
            ));
        }
        if self.interpolated_inflation < 1.0 {
            return Err(Error::Config(format!(
                "interpolated-variance inflation must be at least 1, got {}",
                self.interpolated_inflation
            )));
        }
        if self.initial_freq_var < 0.0 || self.initial_rate_var < 0.0 {
            return Err(Error::Config(
                "initial variances must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Runs the causal constant-velocity smoother over a filtered track, filling
/// in the smoothed values.
pub fn kalman_smooth(track: &DopplerTrack, cfg: &KalmanConfig) -> Result<DopplerTrack> {
    cfg.validate()?;
    track.ensure_contiguous()?;
    if track.entries.is_empty() {
        return Err(Error::Coverage(
            "cannot smooth an empty Doppler track".into(),
        ));
    }

    let td = cfg.td_s;
    let q = cfg.process_noise;
    let (q00, q01, q11) = (q * td * td * td / 3.0, q * td * td / 2.0, q * td);

    let mut out = track.clone();
    let mut x = (track.entries[0].f_hat_hz, 0.0);
    let mut p = (cfg.initial_freq_var, 0.0, cfg.initial_rate_var);
    out.entries[0].f_tilde_hz = Some(x.0);

    for entry in out.entries.iter_mut().skip(1) {
        // Predict.
        x = (x.0 + td * x.1, x.1);
        let p00 = p.0 + td * (2.0 * p.1 + td * p.2) + q00;
        let p01 = p.1 + td * p.2 + q01;
        let p11 = p.2 + q11;

        // Update with the instance's measurement.
        let r = if entry.provenance == Provenance::Interpolated {
            cfg.measurement_var * cfg.interpolated_inflation
        } else {
            cfg.measurement_var
        };
        let s = p00 + r;
        let k0 = p00 / s;
        let k1 = p01 / s;
        let resid = entry.f_hat_hz - x.0;
        x = (x.0 + k0 * resid, x.1 + k1 * resid);
        p = ((1.0 - k0) * p00, (1.0 - k0) * p01, p11 - k1 * p01);
        entry.f_tilde_hz = Some(x.0);
    }
    Ok(out)
}

/// Writes a Doppler track as CSV with per-instance timing.
pub fn write_doppler_track_csv(
    path: &Path,
    track: &DopplerTrack,
    timing: &InstanceTiming,
) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "k,time_s,f_hat_hz,provenance,f_tilde_hz")?;
    for e in &track.entries {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.k,
            timing.time_s(e.k),
            e.f_hat_hz,
            e.provenance,
            e.f_tilde_hz.map_or(String::new(), |v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a Doppler track CSV back, returning the per-row times alongside it.
pub fn read_doppler_track_csv(path: &Path) -> Result<(DopplerTrack, Vec<f64>)> {
    let malformed = |detail: String| Error::MalformedFile {
        path: path.to_path_buf(),
        what: "Doppler track CSV",
        detail,
    };
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut entries = Vec::new();
    let mut times = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(malformed(format!("row {i} has {} fields", fields.len())));
        }
        let parse_f = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|e| malformed(format!("row {i}: bad {what}: {e}")))
        };
        entries.push(DopplerEstimate {
            k: fields[0]
                .parse()
                .map_err(|e| malformed(format!("row {i}: bad instance index: {e}")))?,
            f_hat_hz: parse_f(fields[2], "f_hat")?,
            provenance: fields[3].parse()?,
            f_tilde_hz: if fields[4].is_empty() {
                None
            } else {
                Some(parse_f(fields[4], "f_tilde")?)
            },
        });
        times.push(parse_f(fields[1], "time")?);
    }
    Ok((
        DopplerTrack {
            receiver_id: None,
            entries,
            holds: vec![],
        },
        times,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn map_from(mags: &[f64]) -> CafMap {
        CafMap {
            k: 0,
            delta_f_hz: 2.0,
            half_bins: mags.len() / 2,
            magnitudes: mags.to_vec(),
            argmax_delay: vec![0; mags.len()],
        }
    }

    fn set(k: usize, dets: &[(f64, f64)]) -> DetectionSet {
        DetectionSet {
            k,
            receiver_id: None,
            detections: dets
                .iter()
                .map(|&(frequency_hz, magnitude)| Detection {
                    frequency_hz,
                    magnitude,
                })
                .collect(),
        }
    }

    #[test]
    fn isolated_peak_crosses_its_local_threshold() {
        // Window mean over [1, 1, 10, 1, 1] is 2.8; with gamma = 3 the
        // threshold at the center is 8.4, below the peak of 10.
        let caf = map_from(&[1.0, 1.0, 10.0, 1.0, 1.0]);
        let out = adaptive_threshold_detect(
            &caf,
            &ThresholdParams {
                gamma: 3.0,
                neighbor_half_width: 2,
                exclude_cell_under_test: false,
            },
        )
        .unwrap();
        assert_eq!(out.detections.len(), 1);
        assert_abs_diff_eq!(out.detections[0].frequency_hz, 0.0);
        assert_abs_diff_eq!(out.detections[0].magnitude, 10.0);
    }

    #[test]
    fn flat_map_yields_no_detections() {
        let caf = map_from(&[3.0; 101]);
        let out = adaptive_threshold_detect(&caf, &ThresholdParams::default()).unwrap();
        assert!(out.detections.is_empty());
    }

    #[test]
    fn contiguous_crossings_merge_to_the_strongest_bin() {
        let mut mags = vec![1.0; 101];
        mags[40] = 30.0;
        mags[41] = 80.0;
        mags[42] = 50.0;
        let caf = map_from(&mags);
        let out = adaptive_threshold_detect(&caf, &ThresholdParams::default()).unwrap();
        assert_eq!(out.detections.len(), 1);
        assert_abs_diff_eq!(out.detections[0].magnitude, 80.0);
        assert_abs_diff_eq!(out.detections[0].frequency_hz, caf.frequency_hz(41));
    }

    #[test]
    fn edge_windows_are_truncated_and_renormalized() {
        let mut mags = vec![1.0; 101];
        mags[0] = 12.0;
        let caf = map_from(&mags);
        let out = adaptive_threshold_detect(
            &caf,
            &ThresholdParams {
                gamma: 3.0,
                neighbor_half_width: 25,
                exclude_cell_under_test: false,
            },
        )
        .unwrap();
        // Mean over the 26 surviving bins is (12 + 25) / 26 = 1.42, so the
        // threshold at bin 0 is 4.27 and the edge peak still crosses it.
        assert_eq!(out.detections.len(), 1);
        assert_abs_diff_eq!(out.detections[0].frequency_hz, caf.frequency_hz(0));
    }

    #[test]
    fn baseline_reports_the_global_maximum() {
        let mut mags = vec![1.0; 101];
        mags[70] = 9.0;
        let caf = map_from(&mags);
        assert_abs_diff_eq!(max_peak_baseline(&caf).unwrap(), caf.frequency_hz(70));
        let silent = map_from(&[0.0; 11]);
        assert!(matches!(max_peak_baseline(&silent), Err(Error::NoSignal)));
    }

    #[test]
    fn multi_detection_blend_weights_by_magnitude() {
        // Anchor at -40 Hz, then a two-peak instance: the magnitude-weighted
        // mean (-30) is blended with the previous value at alpha = 0.7.
        let sets = vec![
            set(0, &[(-40.0, 7.0)]),
            set(1, &[(-40.0, 6.0), (-10.0, 2.0)]),
        ];
        let track = track_filter(&sets, &FilterParams { alpha: 0.7 }).unwrap();
        assert_eq!(track.entries[0].provenance, Provenance::Measured);
        assert_abs_diff_eq!(track.entries[0].f_hat_hz, -40.0);
        assert_eq!(track.entries[1].provenance, Provenance::Averaged);
        let weighted = (6.0 / 8.0) * -40.0 + (2.0 / 8.0) * -10.0;
        assert_abs_diff_eq!(
            track.entries[1].f_hat_hz,
            0.7 * -40.0 + 0.3 * weighted,
            epsilon = 1e-12
        );
    }

    #[test]
    fn anchor_skips_leading_multi_detection_instances() {
        let sets = vec![
            set(0, &[(20.0, 5.0), (-40.0, 7.0)]),
            set(1, &[(-40.0, 7.0)]),
        ];
        let track = track_filter(&sets, &FilterParams::default()).unwrap();
        assert_eq!(track.first_k(), Some(1));
        assert_abs_diff_eq!(track.entries[0].f_hat_hz, -40.0);
    }

    #[test]
    fn empty_instance_interpolates_toward_next_single() {
        // 10 Hz anchor, a miss, then 14 Hz: the miss lands exactly halfway.
        let sets = vec![set(0, &[(10.0, 5.0)]), set(1, &[]), set(2, &[(14.0, 5.0)])];
        let track = track_filter(&sets, &FilterParams::default()).unwrap();
        assert_eq!(track.entries[1].provenance, Provenance::Interpolated);
        assert_abs_diff_eq!(track.entries[1].f_hat_hz, 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(track.entries[2].f_hat_hz, 14.0);
        assert!(track.holds.is_empty());
    }

    #[test]
    fn false_alarm_instance_is_damped_by_memory() {
        // A spurious strong peak far from the track moves the estimate by
        // (1 - alpha) of the weighted offset only.
        let sets = vec![set(0, &[(10.0, 8.0)]), set(1, &[(10.0, 8.0), (60.0, 2.0)])];
        let track = track_filter(&sets, &FilterParams { alpha: 0.7 }).unwrap();
        let weighted = 0.8 * 10.0 + 0.2 * 60.0;
        assert_abs_diff_eq!(
            track.entries[1].f_hat_hz,
            0.7 * 10.0 + 0.3 * weighted,
            epsilon = 1e-12
        );
        assert!((track.entries[1].f_hat_hz - 10.0).abs() < 6.0);
    }

    #[test]
    fn trailing_misses_hold_the_last_value_and_are_flagged() {
        let sets = vec![set(0, &[(10.0, 5.0)]), set(1, &[]), set(2, &[])];
        let track = track_filter(&sets, &FilterParams::default()).unwrap();
        assert_abs_diff_eq!(track.entries[1].f_hat_hz, 10.0);
        assert_abs_diff_eq!(track.entries[2].f_hat_hz, 10.0);
        assert_eq!(track.holds, vec![1, 2]);
    }

    #[test]
    fn track_without_any_single_detection_is_unrecoverable() {
        let sets = vec![set(0, &[]), set(1, &[(1.0, 1.0), (2.0, 1.0)])];
        assert!(matches!(
            track_filter(&sets, &FilterParams::default()),
            Err(Error::UnrecoverableTrack)
        ));
    }

    #[test]
    fn non_contiguous_sets_are_rejected() {
        let sets = vec![set(0, &[(1.0, 1.0)]), set(2, &[(1.0, 1.0)])];
        assert!(matches!(
            track_filter(&sets, &FilterParams::default()),
            Err(Error::NonContiguousTrack { at: 2 })
        ));
    }

    fn measured_track(values: &[f64]) -> DopplerTrack {
        DopplerTrack {
            receiver_id: None,
            entries: values
                .iter()
                .enumerate()
                .map(|(k, &f)| DopplerEstimate {
                    k,
                    f_hat_hz: f,
                    provenance: Provenance::Measured,
                    f_tilde_hz: None,
                })
                .collect(),
            holds: vec![],
        }
    }

    #[test]
    fn smoother_converges_on_a_constant() {
        let track = measured_track(&[10.0; 30]);
        let out = kalman_smooth(&track, &KalmanConfig::default()).unwrap();
        for e in out.entries.iter().skip(20) {
            assert_abs_diff_eq!(e.f_tilde_hz.unwrap(), 10.0, epsilon = 0.01);
        }
    }

    #[test]
    fn vanishing_measurement_noise_passes_measurements_through() {
        let values: Vec<f64> = (0..40).map(|k| (k as f64 * 0.3).sin() * 5.0).collect();
        let track = measured_track(&values);
        let cfg = KalmanConfig {
            measurement_var: 1e-12,
            ..KalmanConfig::default()
        };
        let out = kalman_smooth(&track, &cfg).unwrap();
        for (e, &z) in out.entries.iter().zip(&values) {
            assert_abs_diff_eq!(e.f_tilde_hz.unwrap(), z, epsilon = 1e-6);
        }
    }

    #[test]
    fn huge_process_noise_passes_measurements_through() {
        let values: Vec<f64> = (0..40).map(|k| (k as f64 * 1.7).cos() * 8.0).collect();
        let track = measured_track(&values);
        let cfg = KalmanConfig {
            process_noise: 1e12,
            ..KalmanConfig::default()
        };
        let out = kalman_smooth(&track, &cfg).unwrap();
        for (e, &z) in out.entries.iter().zip(&values).skip(1) {
            assert_abs_diff_eq!(e.f_tilde_hz.unwrap(), z, epsilon = 1e-3);
        }
    }

    #[test]
    fn zero_process_noise_approaches_the_best_fit_line() {
        // With no process noise and a diffuse prior the filter is recursive
        // least squares on a linear trend.
        let n = 200;
        let (a, b) = (3.0, 0.4);
        let values: Vec<f64> = (0..n).map(|k| a + b * k as f64 * 0.05).collect();
        let track = measured_track(&values);
        let cfg = KalmanConfig {
            process_noise: 0.0,
            initial_freq_var: 1e9,
            initial_rate_var: 1e9,
            ..KalmanConfig::default()
        };
        let out = kalman_smooth(&track, &cfg).unwrap();
        let last = out.entries.last().unwrap().f_tilde_hz.unwrap();
        assert_abs_diff_eq!(last, a + b * (n - 1) as f64 * 0.05, epsilon = 1e-2);
    }

    #[test]
    fn ramp_lag_stays_below_half_a_bin() {
        let values: Vec<f64> = (0..200).map(|k| 2.0 * k as f64 * 0.05).collect();
        let track = measured_track(&values);
        let out = kalman_smooth(&track, &KalmanConfig::default()).unwrap();
        for (e, &z) in out.entries.iter().zip(&values).skip(100) {
            assert!(
                (e.f_tilde_hz.unwrap() - z).abs() < 0.5,
                "steady-state lag too large at k={}",
                e.k
            );
        }
    }

    #[test]
    fn interpolated_entries_pull_less_than_measured_ones() {
        let mut track = measured_track(&[0.0; 20]);
        // Identical 10 Hz outliers at k=10; one run marks it interpolated.
        track.entries[10].f_hat_hz = 10.0;
        let smoothed_measured = kalman_smooth(&track, &KalmanConfig::default()).unwrap();
        track.entries[10].provenance = Provenance::Interpolated;
        let smoothed_interp = kalman_smooth(&track, &KalmanConfig::default()).unwrap();
        let pull_measured = smoothed_measured.entries[10].f_tilde_hz.unwrap();
        let pull_interp = smoothed_interp.entries[10].f_tilde_hz.unwrap();
        assert!(pull_interp.abs() < pull_measured.abs());
    }

    #[test]
    fn track_csv_round_trips() {
        let mut track = measured_track(&[1.5, -2.25, 3.125]);
        track.entries[1].provenance = Provenance::Interpolated;
        let smoothed = kalman_smooth(&track, &KalmanConfig::default()).unwrap();
        let timing = InstanceTiming {
            t0_s: 0.25,
            td_s: 0.05,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("track.csv");
        write_doppler_track_csv(&path, &smoothed, &timing).unwrap();
        let (back, times) = read_doppler_track_csv(&path).unwrap();
        assert_eq!(back.entries, smoothed.entries);
        for (i, t) in times.iter().enumerate() {
            assert_eq!(*t, timing.time_s(i));
        }
    }

    proptest! {
        #[test]
        fn scaling_magnitudes_leaves_detections_unchanged(
            seed_mags in proptest::collection::vec(0.1_f64..100.0, 51),
            scale in 0.01_f64..100.0,
        ) {
            let caf = map_from(&seed_mags);
            let scaled = map_from(&seed_mags.iter().map(|m| m * scale).collect::<Vec<_>>());
            let params = ThresholdParams { gamma: 3.0, neighbor_half_width: 5, exclude_cell_under_test: false };
            let a = adaptive_threshold_detect(&caf, &params).unwrap();
            let b = adaptive_threshold_detect(&scaled, &params).unwrap();
            let freqs_a: Vec<f64> = a.detections.iter().map(|d| d.frequency_hz).collect();
            let freqs_b: Vec<f64> = b.detections.iter().map(|d| d.frequency_hz).collect();
            prop_assert_eq!(freqs_a, freqs_b);
        }

        #[test]
        fn filtered_track_is_bounded_by_the_detection_range(
            values in proptest::collection::vec(-100.0_f64..100.0, 2..40),
        ) {
            let sets: Vec<DetectionSet> = values
                .iter()
                .enumerate()
                .map(|(k, &f)| set(k, &[(f, 1.0)]))
                .collect();
            let track = track_filter(&sets, &FilterParams::default()).unwrap();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for e in track.entries() {
                prop_assert!(e.f_hat_hz >= lo - 1e-9 && e.f_hat_hz <= hi + 1e-9);
            }
        }
    }
}
