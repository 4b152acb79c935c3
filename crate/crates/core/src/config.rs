//! End-to-end pipeline configuration.
//!
//! A single JSON file describes the scenario (inline or by path), the
//! transmit waveform, both channel models, and every processing stage. All
//! randomness in a run is derived from one master seed, so a configuration
//! file pins the entire simulation and its outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::caf::CafParams;
use crate::clutter::CancellationConfig;
use crate::detection::{FilterParams, KalmanConfig, ThresholdParams};
use crate::error::{Error, Result};
use crate::scenario::ScenarioFile;
use crate::seed::derive_seed;
use crate::waveform::{ChannelConfig, WaveformConfig};

/// A scenario given inline or as a path relative to the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Path(String),
    Inline(Box<ScenarioFile>),
}

/// Kalman smoother settings; the instance period comes from the CAF grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanSettings {
    pub process_noise: f64,
    pub measurement_var: f64,
    pub interpolated_inflation: f64,
    pub initial_freq_var: f64,
    pub initial_rate_var: f64,
}

impl Default for KalmanSettings {
    fn default() -> Self {
        let d = KalmanConfig::default();
        KalmanSettings {
            process_noise: d.process_noise,
            measurement_var: d.measurement_var,
            interpolated_inflation: d.interpolated_inflation,
            initial_freq_var: d.initial_freq_var,
            initial_rate_var: d.initial_rate_var,
        }
    }
}

impl KalmanSettings {
    pub fn to_config(self, td_s: f64) -> KalmanConfig {
        KalmanConfig {
            td_s,
            process_noise: self.process_noise,
            measurement_var: self.measurement_var,
            interpolated_inflation: self.interpolated_inflation,
            initial_freq_var: self.initial_freq_var,
            initial_rate_var: self.initial_rate_var,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingSettings {
    /// Condition-number limit above which the Doppler matrix is rejected.
    pub condition_guard: f64,
    /// Bearing noise applied when triangulating the initial position fix.
    pub init_bearing_noise_std_deg: f64,
    /// Bearing noise for the per-instance angle-of-arrival comparison.
    pub aoa_noise_std_deg: f64,
}

impl Default for TrackingSettings {
    fn default() -> Self {
        TrackingSettings {
            condition_guard: 1e6,
            init_bearing_noise_std_deg: 1.55,
            aoa_noise_std_deg: 1.55,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSettings {
    /// Percentiles reported for every scenario, in percent.
    pub percentiles: Vec<f64>,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings {
            percentiles: vec![50.0, 90.0, 100.0],
        }
    }
}

/// Seeds for every random stage of a run, derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub transmit: u64,
    pub rx1_reference: u64,
    pub rx1_surveillance: u64,
    pub rx2_reference: u64,
    pub rx2_surveillance: u64,
    pub init_fix: u64,
    pub aoa: u64,
}

/// Everything needed to simulate, process, and evaluate one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scenario: ScenarioRef,
    pub waveform: WaveformConfig,
    /// Reference-channel model, shared by both receivers.
    #[serde(default)]
    pub reference: ChannelConfig,
    /// Surveillance-channel model, shared by both receivers.
    pub surveillance: ChannelConfig,
    #[serde(default)]
    pub cancellation: CancellationConfig,
    #[serde(default)]
    pub caf: CafParams,
    #[serde(default)]
    pub threshold: ThresholdParams,
    #[serde(default)]
    pub filter: FilterParams,
    #[serde(default)]
    pub kalman: KalmanSettings,
    #[serde(default)]
    pub tracking: TrackingSettings,
    #[serde(default)]
    pub evaluation: EvaluationSettings,
    #[serde(default)]
    pub master_seed: u64,
    /// Where artifacts are written; in-memory only when absent.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Also write the simulated IQ captures, which dominate output size.
    #[serde(default)]
    pub write_iq: bool,
    #[serde(skip)]
    pub(crate) base_dir: Option<PathBuf>,
}

impl PipelineConfig {
    /// Reads and validates a configuration file. Relative scenario paths
    /// resolve against the file's directory.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::MalformedFile {
            path: path.to_path_buf(),
            what: "pipeline config",
            detail: e.to_string(),
        })?;
        let mut config: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::MalformedFile {
                path: path.to_path_buf(),
                what: "pipeline config",
                detail: e.to_string(),
            })?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.waveform.validate()?;
        self.reference.validate()?;
        self.surveillance.validate()?;
        self.cancellation.validate(self.waveform.sample_rate_hz)?;
        self.caf.validate()?;
        self.threshold.validate()?;
        self.filter.validate()?;
        self.kalman
            .to_config(self.caf.detection_period_s)
            .validate()?;
        if !(self.tracking.condition_guard > 1.0) {
            return Err(Error::Config(format!(
                "condition guard must exceed 1, got {}",
                self.tracking.condition_guard
            )));
        }
        if self.tracking.init_bearing_noise_std_deg < 0.0 || self.tracking.aoa_noise_std_deg < 0.0 {
            return Err(Error::Config("bearing noise must be non-negative".into()));
        }
        if self.evaluation.percentiles.is_empty() {
            return Err(Error::Config("need at least one percentile".into()));
        }
        for &q in &self.evaluation.percentiles {
            if !(0.0..=100.0).contains(&q) {
                return Err(Error::Config(format!(
                    "percentile must lie in [0, 100], got {q}"
                )));
            }
        }
        if self.caf.window_duration_s >= self.waveform.duration_s {
            return Err(Error::Config(format!(
                "integration window ({} s) must be shorter than the capture ({} s)",
                self.caf.window_duration_s, self.waveform.duration_s
            )));
        }
        if let ScenarioRef::Inline(s) = &self.scenario {
            s.geometry.validate()?;
        }
        Ok(())
    }

    /// Loads the scenario, following a path reference if needed.
    pub fn resolve_scenario(&self) -> Result<ScenarioFile> {
        match &self.scenario {
            ScenarioRef::Inline(s) => Ok((**s).clone()),
            ScenarioRef::Path(p) => {
                let mut path = PathBuf::from(p);
                if path.is_relative() {
                    if let Some(base) = &self.base_dir {
                        path = base.join(path);
                    }
                }
                ScenarioFile::load(&path)
            }
        }
    }

    /// Per-stage seeds derived from the master seed.
    pub fn seeds(&self) -> SeedSet {
        let m = self.master_seed;
        SeedSet {
            transmit: derive_seed(m, "tx"),
            rx1_reference: derive_seed(m, "rx1/reference"),
            rx1_surveillance: derive_seed(m, "rx1/surveillance"),
            rx2_reference: derive_seed(m, "rx2/reference"),
            rx2_surveillance: derive_seed(m, "rx2/surveillance"),
            init_fix: derive_seed(m, "init"),
            aoa: derive_seed(m, "aoa"),
        }
    }

    /// Short fingerprint of the serialized configuration, recorded in run
    /// summaries so outputs can be traced back to their settings. Output
    /// routing is excluded so the same settings fingerprint identically
    /// wherever the artifacts land.
    pub fn digest(&self) -> String {
        let mut identity = self.clone();
        identity.out_dir = None;
        identity.write_iq = false;
        let json = serde_json::to_string(&identity).expect("config serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{hash:016x}")
    }

    /// Overrides the directory used to resolve relative scenario paths.
    pub fn set_base_dir(&mut self, dir: Option<PathBuf>) {
        self.base_dir = dir;
    }
}
