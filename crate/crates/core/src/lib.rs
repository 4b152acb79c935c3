//! Passive bistatic sensing toolkit: simulates LTE-style illuminators echoing
//! off a small UAV into two ground receivers, detects the time-varying
//! bistatic Doppler of the echo in the cross-ambiguity function, and
//! reconstructs the UAV trajectory by inverting the two-channel Doppler
//! observations into a velocity sequence that is dead-reckoned from an
//! initial position fix.
//!
//! The crate is organized as a pipeline:
//!
//! * [`scenario`]: geometry, ground-truth trajectories, and the forward
//!   Doppler model.
//! * [`waveform`]: transmit waveform synthesis and reference/surveillance
//!   channel simulation.
//! * [`clutter`]: batched least-squares cancellation of direct-path and
//!   static multipath returns.
//! * [`caf`]: cross-ambiguity maps evaluated on a sliding window grid.
//! * [`detection`]: adaptive thresholding, track filtering, and Kalman
//!   smoothing of per-instance Doppler measurements.
//! * [`tracking`]: Doppler-matrix inversion, dead reckoning, and
//!   angle-of-arrival triangulation.
//! * [`evaluation`]: tracking-error reports, percentiles, and CDF exports.
//! * [`config`] / [`pipeline`]: end-to-end orchestration from a single
//!   configuration file, as used by the `bistatic` CLI.

pub mod caf;
pub mod clutter;
pub mod config;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod iq;
pub mod pipeline;
pub mod scenario;
pub mod seed;
pub mod tracking;
pub mod waveform;

pub use crate::caf::{caf_spectrogram, compute_caf, CafMap, CafParams, InstanceTiming};
pub use crate::clutter::{cancel_clutter, CancellationConfig};
pub use crate::config::PipelineConfig;
pub use crate::detection::{
    adaptive_threshold_detect, kalman_smooth, max_peak_baseline, track_filter, Detection,
    DetectionSet, DopplerEstimate, DopplerTrack, FilterParams, KalmanConfig, Provenance,
    ThresholdParams,
};
pub use crate::error::{Error, Result};
pub use crate::evaluation::{
    percentile, position_errors, tracking_errors, ErrorReport, InstanceError, ScenarioLabel,
};
pub use crate::iq::{read_iq, read_iq_with_header, write_iq, IqFileHeader};
pub use crate::pipeline::{run_pipeline, scenario_suite, SuiteOutcome, SuiteSummary};
pub use crate::scenario::{
    make_waypoint_trajectory, preset_waypoints, true_bistatic_doppler, GroundTruthTrack,
    Position2D, ReceiverId, ScenarioFile, ScenarioGeometry, TrackSample, TrajectoryPreset,
    TurnPolicy, Velocity2D, MAX_UAV_SPEED_MPS, SPEED_OF_LIGHT_MPS,
};
pub use crate::tracking::{
    build_doppler_matrix, integrate_trajectory, invert_velocity, perturb_initial_location,
    triangulate_aoa, DopplerMatrix, TrackEstimate, TrackPoint,
};
pub use crate::waveform::{
    apply_reference_channel, apply_surveillance_channel, gen_tx_signal, ChannelConfig, ChannelRole,
    ClutterPath, IqCapture, MicroDopplerConfig, TargetGainModel, WaveformConfig, WaveformKind,
};
