//! Chaining the stages through files must reproduce the in-memory pipeline
//! bit for bit, and a pipeline run must leave byte-identical artifacts when
//! repeated with the same configuration.

use std::path::{Path, PathBuf};

use bistatic_core::caf::{read_spectrogram_bin, write_spectrogram_bin};
use bistatic_core::detection::{
    kalman_smooth, read_doppler_track_csv, track_filter, write_doppler_track_csv, DopplerTrack,
};
use bistatic_core::iq::{read_iq, write_iq};
use bistatic_core::pipeline::{read_track_csv, run_pipeline, simulate, write_track_csv};
use bistatic_core::tracking::{align_spans, integrate_trajectory};
use bistatic_core::{
    adaptive_threshold_detect, caf_spectrogram, cancel_clutter, scenario_suite, InstanceTiming,
    PipelineConfig, ScenarioLabel,
};

fn smoke_config() -> PipelineConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json");
    PipelineConfig::load(&path).expect("smoke config loads")
}

fn assert_tracks_match(got: &DopplerTrack, expected: &DopplerTrack, what: &str) {
    assert_eq!(got.entries.len(), expected.entries.len(), "{what} length");
    for (a, b) in got.entries.iter().zip(&expected.entries) {
        assert_eq!(a.k, b.k, "{what} instance index");
        assert_eq!(
            a.f_hat_hz.to_bits(),
            b.f_hat_hz.to_bits(),
            "{what} filtered value at k = {}",
            a.k
        );
        assert_eq!(
            a.provenance, b.provenance,
            "{what} provenance at k = {}",
            a.k
        );
        match (a.f_tilde_hz, b.f_tilde_hz) {
            (Some(x), Some(y)) => assert_eq!(
                x.to_bits(),
                y.to_bits(),
                "{what} smoothed value at k = {}",
                a.k
            ),
            (None, None) => {}
            _ => panic!("{what} smoothing presence differs at k = {}", a.k),
        }
    }
    assert_eq!(got.holds, expected.holds, "{what} holds");
}

#[test]
fn staged_files_reproduce_the_in_memory_suite() {
    let config = smoke_config();
    let expected = scenario_suite(&config).expect("in-memory suite");
    let dir = tempfile::tempdir().expect("tempdir");

    let sim = simulate(&config).expect("simulation");
    let mut tracks: Vec<(DopplerTrack, InstanceTiming)> = Vec::new();
    for rc in &sim.receivers {
        let id = rc.receiver_id;
        let surv_path = dir.path().join(format!("{id}_surveillance.iq"));
        let ref_path = dir.path().join(format!("{id}_reference.iq"));
        write_iq(&surv_path, &rc.surveillance, None).expect("write surveillance");
        write_iq(&ref_path, &rc.reference, None).expect("write reference");
        let surveillance = read_iq(&surv_path).expect("read surveillance");
        let reference = read_iq(&ref_path).expect("read reference");

        let cleaned =
            cancel_clutter(&surveillance, &reference, &config.cancellation).expect("cancel");
        let clean_path = dir.path().join(format!("{id}_clean.iq"));
        write_iq(&clean_path, &cleaned, None).expect("write cleaned");
        let cleaned = read_iq(&clean_path).expect("read cleaned");

        let maps = caf_spectrogram(&cleaned, &reference, &config.caf).expect("spectrogram");
        let spec_path = dir.path().join(format!("spectrogram_{id}.bin"));
        write_spectrogram_bin(&spec_path, &maps, &config.caf.timing(cleaned.start_time_s))
            .expect("write spectrogram");
        let (maps, timing) = read_spectrogram_bin(&spec_path).expect("read spectrogram");

        let detections = maps
            .iter()
            .map(|m| adaptive_threshold_detect(m, &config.threshold).map(|d| d.with_receiver(id)))
            .collect::<Result<Vec<_>, _>>()
            .expect("detection");
        let filtered = track_filter(&detections, &config.filter).expect("track filter");
        let smoothed =
            kalman_smooth(&filtered, &config.kalman.to_config(timing.td_s)).expect("smoothing");

        let doppler_path = dir.path().join(format!("doppler_{id}.csv"));
        write_doppler_track_csv(&doppler_path, &smoothed, &timing).expect("write track");
        let (read_back, _times) = read_doppler_track_csv(&doppler_path).expect("read track");
        tracks.push((read_back, timing));
    }

    for ((track, _), products) in tracks.iter().zip(&expected.receivers) {
        assert_tracks_match(
            track,
            &products.smoothed,
            &format!("{} smoothed track", products.receiver_id),
        );
    }

    let timing = tracks[0].1;
    let (t1, t2) = align_spans(&tracks[0].0, &tracks[1].0).expect("align");
    let lo = t1.first_k().expect("non-empty track");
    let p0 = sim
        .track
        .position_at(timing.time_s(lo))
        .expect("truth at start");
    let estimate = integrate_trajectory(
        p0,
        &t1,
        &t2,
        &sim.geometry,
        timing.td_s,
        config.tracking.condition_guard,
    )
    .expect("dead reckoning");

    let reference = expected
        .estimate(ScenarioLabel::PerfectInit)
        .expect("perfect-init estimate");
    assert_eq!(estimate.points.len(), reference.points.len());
    for (a, b) in estimate.points.iter().zip(&reference.points) {
        assert_eq!(a.k, b.k);
        assert_eq!(a.position.x.to_bits(), b.position.x.to_bits());
        assert_eq!(a.position.y.to_bits(), b.position.y.to_bits());
        assert_eq!(a.velocity.x.to_bits(), b.velocity.x.to_bits());
        assert_eq!(a.velocity.y.to_bits(), b.velocity.y.to_bits());
    }

    let track_path = dir.path().join("track_perfect_init.csv");
    write_track_csv(&track_path, &estimate, &timing).expect("write trajectory");
    let fixes = read_track_csv(&track_path).expect("read trajectory");
    assert_eq!(fixes.len(), estimate.points.len());
    for ((k, _, fix), point) in fixes.iter().zip(&estimate.points) {
        assert_eq!(*k, point.k);
        assert_eq!(fix.x.to_bits(), point.position.x.to_bits());
        assert_eq!(fix.y.to_bits(), point.position.y.to_bits());
    }
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("read dir")
        .map(|e| {
            let e = e.expect("dir entry");
            let name = e.file_name().to_string_lossy().into_owned();
            let bytes = std::fs::read(e.path()).expect("read artifact");
            (name, bytes)
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

#[test]
fn pipeline_artifacts_are_byte_identical_across_reruns() {
    let run = |dir: PathBuf| {
        let mut config = smoke_config();
        config.out_dir = Some(dir);
        config.write_iq = true;
        run_pipeline(&config).expect("pipeline run");
    };
    let first_dir = tempfile::tempdir().expect("tempdir");
    let second_dir = tempfile::tempdir().expect("tempdir");
    run(first_dir.path().to_path_buf());
    run(second_dir.path().to_path_buf());

    let first = dir_contents(first_dir.path());
    let second = dir_contents(second_dir.path());
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        second.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(),
        "artifact sets differ"
    );
    for expected in [
        "summary.json",
        "errors_perfect_init.csv",
        "cdf_noisy_init.csv",
        "doppler_rx1.csv",
        "baseline_rx2.csv",
        "spectrogram_rx1.bin",
        "track_perfect_init.csv",
        "aoa_fixes.csv",
        "truth.csv",
        "tx.iq",
        "rx1_surveillance.iq.json",
    ] {
        assert!(names.contains(&expected), "missing artifact {expected}");
    }
    for ((name, a), (_, b)) in first.iter().zip(&second) {
        assert_eq!(a, b, "artifact {name} differs between reruns");
    }
}
