//! End-to-end orchestration: simulate both receiver chains, process each
//! into a smoothed Doppler track, dead-reckon the trajectory under several
//! initialization scenarios, and score everything against ground truth.

use std::path::Path;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::caf::{caf_spectrogram, write_spectrogram_bin, CafMap, InstanceTiming};
use crate::clutter::cancel_clutter;
use crate::config::{PipelineConfig, SeedSet};
use crate::detection::{
    adaptive_threshold_detect, kalman_smooth, max_peak_track, track_filter,
    write_doppler_track_csv, DetectionSet, DopplerTrack,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    percentile, position_errors, tracking_errors, write_cdf_csv, write_errors_csv, ErrorReport,
    ScenarioLabel,
};
use crate::iq::write_iq_with_seed;
use crate::scenario::{GroundTruthTrack, Position2D, ReceiverId, ScenarioGeometry};
use crate::tracking::{align_spans, integrate_trajectory, triangulate_aoa, TrackEstimate};
use crate::waveform::{
    apply_reference_channel, apply_surveillance_channel, gen_tx_signal, IqCapture,
};

/// Simulated captures for one receiver.
#[derive(Debug, Clone)]
pub struct ReceiverCaptures {
    pub receiver_id: ReceiverId,
    pub reference: IqCapture,
    pub surveillance: IqCapture,
}

/// Output of the simulation stage.
#[derive(Debug, Clone)]
pub struct SimulationProducts {
    pub geometry: ScenarioGeometry,
    pub track: GroundTruthTrack,
    pub tx: IqCapture,
    pub receivers: Vec<ReceiverCaptures>,
}

/// Processing products for one receiver chain.
#[derive(Debug, Clone)]
pub struct ReceiverProducts {
    pub receiver_id: ReceiverId,
    pub maps: Vec<CafMap>,
    pub detections: Vec<DetectionSet>,
    /// Track-filtered and Kalman-smoothed Doppler sequence.
    pub smoothed: DopplerTrack,
    /// Strongest-bin Doppler sequence with no track filtering.
    pub baseline: DopplerTrack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiverSummary {
    pub receiver_id: ReceiverId,
    pub instances: usize,
    pub single_detections: usize,
    pub multiple_detections: usize,
    pub missed_detections: usize,
    pub holds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: ScenarioLabel,
    pub instances: usize,
    pub p50_m: f64,
    pub p90_m: f64,
    pub max_m: f64,
}

/// Headline numbers for a run, written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub config_digest: String,
    pub master_seed: u64,
    pub seeds: SeedSet,
    pub receivers: Vec<ReceiverSummary>,
    pub scenarios: Vec<ScenarioSummary>,
}

/// Everything a run produces, kept in memory.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub geometry: ScenarioGeometry,
    pub track: GroundTruthTrack,
    pub timing: InstanceTiming,
    pub receivers: Vec<ReceiverProducts>,
    pub estimates: Vec<(ScenarioLabel, TrackEstimate)>,
    pub aoa_fixes: Vec<(usize, f64, Position2D)>,
    pub reports: Vec<ErrorReport>,
    pub summary: SuiteSummary,
}

impl SuiteOutcome {
    pub fn report(&self, scenario: ScenarioLabel) -> Option<&ErrorReport> {
        self.reports.iter().find(|r| r.scenario == scenario)
    }

    pub fn estimate(&self, scenario: ScenarioLabel) -> Option<&TrackEstimate> {
        self.estimates
            .iter()
            .find(|(label, _)| *label == scenario)
            .map(|(_, e)| e)
    }
}

/// Simulates the transmit waveform and both receiver chains.
pub fn simulate(config: &PipelineConfig) -> Result<SimulationProducts> {
    config.validate()?;
    let scenario = config.resolve_scenario()?;
    scenario.geometry.validate()?;
    let track = scenario.build_track().map_err(|e| e.in_stage("scenario"))?;
    let seeds = config.seeds();

    let mut waveform = config.waveform;
    waveform.seed = seeds.transmit;
    let tx = gen_tx_signal(&waveform).map_err(|e| e.in_stage("simulate"))?;

    let mut receivers = Vec::with_capacity(2);
    for id in ReceiverId::BOTH {
        let (ref_seed, surv_seed) = match id {
            ReceiverId::Rx1 => (seeds.rx1_reference, seeds.rx1_surveillance),
            ReceiverId::Rx2 => (seeds.rx2_reference, seeds.rx2_surveillance),
        };
        let reference = apply_reference_channel(&tx, &config.reference, id, ref_seed)
            .map_err(|e| e.in_stage("simulate"))?;
        let surveillance = apply_surveillance_channel(
            &tx,
            &track,
            &scenario.geometry,
            id,
            &config.surveillance,
            surv_seed,
        )
        .map_err(|e| e.in_stage("simulate"))?;
        receivers.push(ReceiverCaptures {
            receiver_id: id,
            reference,
            surveillance,
        });
    }

    Ok(SimulationProducts {
        geometry: scenario.geometry,
        track,
        tx,
        receivers,
    })
}

/// Runs one receiver chain: clutter cancellation, CAF spectrogram, adaptive
/// detection, track filtering, Kalman smoothing, and the strongest-bin
/// baseline.
pub fn process_receiver(
    surveillance: &IqCapture,
    reference: &IqCapture,
    config: &PipelineConfig,
    receiver_id: ReceiverId,
) -> Result<ReceiverProducts> {
    let cleaned = cancel_clutter(surveillance, reference, &config.cancellation)
        .map_err(|e| e.in_stage("cancel"))?;
    let maps = caf_spectrogram(&cleaned, reference, &config.caf).map_err(|e| e.in_stage("caf"))?;
    drop(cleaned);

    let detections = maps
        .iter()
        .map(|m| {
            adaptive_threshold_detect(m, &config.threshold).map(|d| d.with_receiver(receiver_id))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("detect"))?;

    let filtered =
        track_filter(&detections, &config.filter).map_err(|e| e.in_stage("track_filter"))?;
    let smoothed = kalman_smooth(
        &filtered,
        &config.kalman.to_config(config.caf.detection_period_s),
    )
    .map_err(|e| e.in_stage("smooth"))?;
    let baseline = max_peak_track(&maps, receiver_id).map_err(|e| e.in_stage("detect"))?;

    Ok(ReceiverProducts {
        receiver_id,
        maps,
        detections,
        smoothed,
        baseline,
    })
}

fn receiver_summary(products: &ReceiverProducts) -> ReceiverSummary {
    let mut single = 0;
    let mut multiple = 0;
    let mut missed = 0;
    for set in &products.detections {
        match set.detections.len() {
            0 => missed += 1,
            1 => single += 1,
            _ => multiple += 1,
        }
    }
    ReceiverSummary {
        receiver_id: products.receiver_id,
        instances: products.detections.len(),
        single_detections: single,
        multiple_detections: multiple,
        missed_detections: missed,
        holds: products.smoothed.holds.len(),
    }
}

/// Dead reckoning that salvages the partial trajectory when the Doppler
/// matrix degenerates mid-track, as raw baseline tracks sometimes do.
fn integrate_lenient(
    p0: Position2D,
    t1: &DopplerTrack,
    t2: &DopplerTrack,
    geom: &ScenarioGeometry,
    td_s: f64,
    guard: f64,
) -> Result<TrackEstimate> {
    match integrate_trajectory(p0, t1, t2, geom, td_s, guard) {
        Ok(estimate) => Ok(estimate),
        Err(Error::DegenerateMidTrack { partial, .. }) if !partial.points.is_empty() => {
            Ok(*partial)
        }
        Err(e) => Err(e),
    }
}

/// Processes simulated captures through every evaluation scenario.
pub fn suite_from_captures(
    config: &PipelineConfig,
    sim: &SimulationProducts,
) -> Result<SuiteOutcome> {
    let geom = sim.geometry.clone();
    let timing = config.caf.timing(sim.tx.start_time_s);
    let td = timing.td_s;
    let guard = config.tracking.condition_guard;
    let seeds = config.seeds();
    let qs = &config.evaluation.percentiles;

    let receivers = sim
        .receivers
        .iter()
        .map(|rc| process_receiver(&rc.surveillance, &rc.reference, config, rc.receiver_id))
        .collect::<Result<Vec<_>>>()?;

    let (s1, s2) = align_spans(&receivers[0].smoothed, &receivers[1].smoothed)
        .map_err(|e| e.in_stage("integrate"))?;
    let lo = s1.first_k().expect("aligned tracks are non-empty");
    let hi = s1.last_k().expect("aligned tracks are non-empty");
    let b1 = receivers[0].baseline.slice(lo, hi);
    let b2 = receivers[1].baseline.slice(lo, hi);

    let p0_true = sim.track.position_at(timing.time_s(lo))?;

    let perfect = integrate_trajectory(p0_true, &s1, &s2, &geom, td, guard)
        .map_err(|e| e.in_stage("integrate"))?;

    let p0_noisy = crate::tracking::perturb_initial_location(
        p0_true,
        &geom,
        config.tracking.init_bearing_noise_std_deg,
        seeds.init_fix,
    )
    .map_err(|e| e.in_stage("integrate"))?;
    let noisy = integrate_trajectory(p0_noisy, &s1, &s2, &geom, td, guard)
        .map_err(|e| e.in_stage("integrate"))?;

    let baseline = integrate_lenient(p0_true, &b1, &b2, &geom, td, guard)
        .map_err(|e| e.in_stage("integrate"))?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seeds.aoa);
    let mut aoa_fixes = Vec::with_capacity(hi - lo + 1);
    for k in lo..=hi {
        let t = timing.time_s(k);
        let p = sim.track.position_at(t)?;
        let mut bearings = [0.0f64; 2];
        for id in ReceiverId::BOTH {
            let rx = geom.rx(id);
            let noise: f64 = StandardNormal.sample(&mut rng);
            bearings[id.index()] = (p.y - rx.y).atan2(p.x - rx.x).to_degrees()
                + config.tracking.aoa_noise_std_deg * noise;
        }
        match triangulate_aoa(geom.rx1, bearings[0], geom.rx2, bearings[1]) {
            Ok(fix) => aoa_fixes.push((k, t, fix)),
            Err(Error::NoIntersection { .. }) => {}
            Err(e) => return Err(e.in_stage("integrate")),
        }
    }

    let reports = vec![
        tracking_errors(
            &perfect,
            &sim.track,
            &timing,
            ScenarioLabel::PerfectInit,
            qs,
        )
        .map_err(|e| e.in_stage("evaluate"))?,
        tracking_errors(&noisy, &sim.track, &timing, ScenarioLabel::NoisyInit, qs)
            .map_err(|e| e.in_stage("evaluate"))?,
        tracking_errors(
            &baseline,
            &sim.track,
            &timing,
            ScenarioLabel::BaselineMaxpeak,
            qs,
        )
        .map_err(|e| e.in_stage("evaluate"))?,
        position_errors(&aoa_fixes, &sim.track, ScenarioLabel::AoaTriangulation, qs)
            .map_err(|e| e.in_stage("evaluate"))?,
    ];

    let scenarios = reports
        .iter()
        .map(|r| {
            Ok(ScenarioSummary {
                scenario: r.scenario,
                instances: r.len(),
                p50_m: percentile(r, 50.0)?,
                p90_m: percentile(r, 90.0)?,
                max_m: percentile(r, 100.0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = SuiteSummary {
        config_digest: config.digest(),
        master_seed: config.master_seed,
        seeds,
        receivers: receivers.iter().map(receiver_summary).collect(),
        scenarios,
    };

    Ok(SuiteOutcome {
        geometry: geom,
        track: sim.track.clone(),
        timing,
        receivers,
        estimates: vec![
            (ScenarioLabel::PerfectInit, perfect),
            (ScenarioLabel::NoisyInit, noisy),
            (ScenarioLabel::BaselineMaxpeak, baseline),
        ],
        aoa_fixes,
        reports,
        summary,
    })
}

/// Simulates and evaluates the full scenario suite in memory.
pub fn scenario_suite(config: &PipelineConfig) -> Result<SuiteOutcome> {
    let sim = simulate(config)?;
    suite_from_captures(config, &sim)
}

/// Writes a dead-reckoned trajectory as
/// `k,time_s,x_m,y_m,vx_mps,vy_mps,condition_number`.
pub fn write_track_csv(
    path: &Path,
    estimate: &TrackEstimate,
    timing: &InstanceTiming,
) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "k,time_s,x_m,y_m,vx_mps,vy_mps,condition_number")?;
    for p in &estimate.points {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.k,
            timing.time_s(p.k),
            p.position.x,
            p.position.y,
            p.velocity.x,
            p.velocity.y,
            p.condition_number
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the per-instance position fixes back out of a trajectory CSV.
pub fn read_track_csv(path: &Path) -> Result<Vec<(usize, f64, Position2D)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if !header.starts_with("k,time_s,x_m,y_m") {
        return Err(Error::MalformedFile {
            path: path.to_path_buf(),
            what: "trajectory CSV header",
            detail: header.to_string(),
        });
    }
    let mut fixes = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |what: &'static str, s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::MalformedFile {
                path: path.to_path_buf(),
                what,
                detail: format!("row {}: {s:?}", i + 2),
            })
        };
        if fields.len() < 4 {
            return Err(Error::MalformedFile {
                path: path.to_path_buf(),
                what: "trajectory CSV row",
                detail: format!("row {} has {} fields", i + 2, fields.len()),
            });
        }
        let k = fields[0].parse().map_err(|_| Error::MalformedFile {
            path: path.to_path_buf(),
            what: "instance index",
            detail: format!("row {}: {:?}", i + 2, fields[0]),
        })?;
        fixes.push((
            k,
            parse("time", fields[1])?,
            Position2D::new(parse("x", fields[2])?, parse("y", fields[3])?),
        ));
    }
    Ok(fixes)
}

fn write_truth_csv(
    path: &Path,
    track: &GroundTruthTrack,
    timing: &InstanceTiming,
    instances: usize,
) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "k,time_s,x_m,y_m,vx_mps,vy_mps")?;
    for k in 0..instances {
        let t = timing.time_s(k);
        let (p, v) = track.state_at(t)?;
        writeln!(w, "{},{},{},{},{},{}", k, t, p.x, p.y, v.x, v.y)?;
    }
    w.flush()?;
    Ok(())
}

fn write_aoa_csv(path: &Path, fixes: &[(usize, f64, Position2D)]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "k,time_s,x_m,y_m")?;
    for (k, t, p) in fixes {
        writeln!(w, "{},{},{},{}", k, t, p.x, p.y)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the full suite and writes every artifact into the configured
/// output directory. With no output directory this is [`scenario_suite`].
pub fn run_pipeline(config: &PipelineConfig) -> Result<SuiteOutcome> {
    let Some(out_dir) = config.out_dir.clone() else {
        return scenario_suite(config);
    };
    std::fs::create_dir_all(&out_dir)?;

    let sim = simulate(config)?;
    if config.write_iq {
        let seeds = config.seeds();
        write_iq_with_seed(&out_dir.join("tx.iq"), &sim.tx, None, Some(seeds.transmit))?;
        for rc in &sim.receivers {
            let (ref_seed, surv_seed) = match rc.receiver_id {
                ReceiverId::Rx1 => (seeds.rx1_reference, seeds.rx1_surveillance),
                ReceiverId::Rx2 => (seeds.rx2_reference, seeds.rx2_surveillance),
            };
            write_iq_with_seed(
                &out_dir.join(format!("{}_reference.iq", rc.receiver_id)),
                &rc.reference,
                None,
                Some(ref_seed),
            )?;
            write_iq_with_seed(
                &out_dir.join(format!("{}_surveillance.iq", rc.receiver_id)),
                &rc.surveillance,
                None,
                Some(surv_seed),
            )?;
        }
    }

    let outcome = suite_from_captures(config, &sim)?;
    drop(sim);

    for products in &outcome.receivers {
        let id = products.receiver_id;
        write_spectrogram_bin(
            &out_dir.join(format!("spectrogram_{id}.bin")),
            &products.maps,
            &outcome.timing,
        )?;
        write_doppler_track_csv(
            &out_dir.join(format!("doppler_{id}.csv")),
            &products.smoothed,
            &outcome.timing,
        )?;
        write_doppler_track_csv(
            &out_dir.join(format!("baseline_{id}.csv")),
            &products.baseline,
            &outcome.timing,
        )?;
    }

    for (label, estimate) in &outcome.estimates {
        write_track_csv(
            &out_dir.join(format!("track_{label}.csv")),
            estimate,
            &outcome.timing,
        )?;
    }
    write_aoa_csv(&out_dir.join("aoa_fixes.csv"), &outcome.aoa_fixes)?;

    let instances = outcome.receivers[0].maps.len();
    write_truth_csv(
        &out_dir.join("truth.csv"),
        &outcome.track,
        &outcome.timing,
        instances,
    )?;

    for report in &outcome.reports {
        write_errors_csv(
            &out_dir.join(format!("errors_{}.csv", report.scenario)),
            report,
        )?;
        write_cdf_csv(
            &out_dir.join(format!("cdf_{}.csv", report.scenario)),
            report,
        )?;
    }

    let summary_json = serde_json::to_string_pretty(&outcome.summary)?;
    std::fs::write(out_dir.join("summary.json"), summary_json)?;

    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{EvaluationSettings, KalmanSettings, ScenarioRef, TrackingSettings};
    use crate::scenario::{ScenarioFile, TrajectoryPreset, TrajectorySpec};
    use crate::waveform::{ChannelConfig, TargetGainModel, WaveformConfig, WaveformKind};
    use num_complex::Complex64;

    fn desk_scenario() -> ScenarioFile {
        ScenarioFile {
            geometry: ScenarioGeometry::new(
                Position2D::new(-170.0, 105.0),
                Position2D::new(205.0, 120.0),
                Position2D::new(0.0, 0.0),
                Position2D::new(40.0, 0.0),
                0.16205,
                0.16031,
            )
            .unwrap(),
            trajectory: TrajectorySpec::Preset {
                preset: TrajectoryPreset::UShape,
                origin: Position2D::new(15.0, 20.0),
                size_m: 20.0,
            },
            speed_mps: 5.0,
            sample_period_s: 0.005,
            turn_policy: Default::default(),
        }
    }

    fn small_config() -> PipelineConfig {
        let mut config = PipelineConfig {
            scenario: ScenarioRef::Inline(Box::new(desk_scenario())),
            waveform: WaveformConfig {
                sample_rate_hz: 16_000.0,
                occupied_bandwidth_hz: 12_000.0,
                duration_s: 3.5,
                kind: WaveformKind::BandlimitedNoise,
                seed: 0,
            },
            reference: ChannelConfig::default(),
            surveillance: ChannelConfig {
                clutter_paths: vec![crate::waveform::ClutterPath {
                    gain: Complex64::new(0.5, 0.2),
                    delay_s: 0.0,
                }],
                target: Some(TargetGainModel::Constant {
                    gain: Complex64::new(0.1, 0.0),
                }),
                noise_power: 1e-3,
                ..ChannelConfig::default()
            },
            cancellation: Default::default(),
            caf: Default::default(),
            threshold: Default::default(),
            filter: Default::default(),
            kalman: KalmanSettings::default(),
            tracking: TrackingSettings::default(),
            evaluation: EvaluationSettings::default(),
            master_seed: 11,
            out_dir: None,
            write_iq: false,
            base_dir: None,
        };
        config.threshold.gamma = 4.5;
        config
    }

    #[test]
    fn suite_tracks_a_straight_leg() {
        let outcome = scenario_suite(&small_config()).unwrap();
        assert_eq!(outcome.reports.len(), 4);
        assert_eq!(outcome.estimates.len(), 3);

        let perfect = outcome.report(ScenarioLabel::PerfectInit).unwrap();
        let p50 = percentile(perfect, 50.0).unwrap();
        assert!(p50 < 1.0, "median error {p50:.3} m too large");

        let summary = &outcome.summary;
        assert_eq!(summary.scenarios.len(), 4);
        assert_eq!(summary.receivers.len(), 2);
        for r in &summary.receivers {
            assert!(
                r.single_detections > r.instances / 2,
                "{}: only {}/{} single detections",
                r.receiver_id,
                r.single_detections,
                r.instances
            );
        }
    }

    #[test]
    fn suite_is_deterministic() {
        let config = small_config();
        let a = scenario_suite(&config).unwrap();
        let b = scenario_suite(&config).unwrap();
        assert_eq!(a.summary, b.summary);
        for (ea, eb) in a.estimates.iter().zip(&b.estimates) {
            assert_eq!(ea.0, eb.0);
            assert_eq!(ea.1.points, eb.1.points);
        }
        for (ra, rb) in a.receivers.iter().zip(&b.receivers) {
            assert_eq!(ra.smoothed.entries, rb.smoothed.entries);
        }
    }

    #[test]
    fn missing_echo_fails_cleanly() {
        let mut config = small_config();
        config.surveillance.target = None;
        let err = scenario_suite(&config).unwrap_err();
        assert!(!err.is_config_error());
    }

    #[test]
    fn run_pipeline_writes_the_artifact_set() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config();
        config.out_dir = Some(dir.path().to_path_buf());
        let outcome = run_pipeline(&config).unwrap();

        for name in [
            "summary.json",
            "spectrogram_rx1.bin",
            "spectrogram_rx2.bin",
            "doppler_rx1.csv",
            "doppler_rx2.csv",
            "baseline_rx1.csv",
            "baseline_rx2.csv",
            "track_perfect_init.csv",
            "track_noisy_init.csv",
            "track_baseline_maxpeak.csv",
            "aoa_fixes.csv",
            "truth.csv",
            "errors_perfect_init.csv",
            "cdf_perfect_init.csv",
            "errors_aoa_triangulation.csv",
            "cdf_aoa_triangulation.csv",
        ] {
            assert!(dir.path().join(name).exists(), "missing {name}");
        }
        assert!(!dir.path().join("tx.iq").exists());

        let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let parsed: SuiteSummary = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, outcome.summary);
        assert_eq!(parsed.config_digest, config.digest());
    }
}
