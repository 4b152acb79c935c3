//! Transmit waveform synthesis and channel simulation.
//!
//! The illuminator is modeled as a wideband downlink-style signal: either a
//! cyclic-prefixed OFDM carrier with QPSK subcarriers or brick-wall
//! bandlimited Gaussian noise. The reference channel receives a line-of-sight
//! copy; the surveillance channel receives static clutter paths plus the
//! target echo, whose carrier phase advances by the running integral of the
//! instantaneous bistatic Doppler and whose envelope is delayed by the
//! time-varying bistatic path excess.
//!
//! Captures store interleaved complex samples as `f32`, matching the on-disk
//! cf32le format; all signal processing converts to `f64`.

use num_complex::{Complex, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{GroundTruthTrack, ReceiverId, ScenarioGeometry, SPEED_OF_LIGHT_MPS};
use crate::seed::derive_seed;

/// Which link a capture belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRole {
    Transmit,
    Reference,
    Surveillance,
}

impl std::fmt::Display for ChannelRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChannelRole::Transmit => write!(f, "transmit"),
            ChannelRole::Reference => write!(f, "reference"),
            ChannelRole::Surveillance => write!(f, "surveillance"),
        }
    }
}

/// A block of baseband IQ samples with capture metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct IqCapture {
    pub samples: Vec<Complex<f32>>,
    pub sample_rate_hz: f64,
    pub start_time_s: f64,
    pub channel_role: ChannelRole,
    pub receiver_id: Option<ReceiverId>,
    /// Set once the capture has passed through clutter cancellation.
    pub cleaned: bool,
}

impl IqCapture {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Mean squared magnitude, accumulated in f64.
    pub fn average_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples
            .iter()
            .map(|c| {
                let re = c.re as f64;
                let im = c.im as f64;
                re * re + im * im
            })
            .sum::<f64>()
            / self.samples.len() as f64
    }

    /// Copies `len` samples starting at `start` into an f64 buffer.
    pub fn window_f64(&self, start: usize, len: usize) -> Vec<Complex64> {
        self.samples[start..start + len]
            .iter()
            .map(|c| Complex64::new(c.re as f64, c.im as f64))
            .collect()
    }

    /// Converts the whole capture to f64.
    pub fn samples_f64(&self) -> Vec<Complex64> {
        self.window_f64(0, self.samples.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WaveformKind {
    #[default]
    OfdmLike,
    BandlimitedNoise,
}

/// Transmit waveform settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    pub sample_rate_hz: f64,
    pub occupied_bandwidth_hz: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub kind: WaveformKind,
    #[serde(default)]
    pub seed: u64,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        WaveformConfig {
            sample_rate_hz: 3.072e6,
            occupied_bandwidth_hz: 2.5e6,
            duration_s: 1.0,
            kind: WaveformKind::OfdmLike,
            seed: 0,
        }
    }
}

impl WaveformConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) || !(self.duration_s > 0.0) {
            return Err(Error::Config(
                "sample rate and duration must be positive".into(),
            ));
        }
        if !(self.occupied_bandwidth_hz > 0.0)
            || self.occupied_bandwidth_hz > 0.9 * self.sample_rate_hz
        {
            return Err(Error::Config(format!(
                "occupied bandwidth must lie in (0, 0.9 * sample_rate], got {} at {} Sa/s",
                self.occupied_bandwidth_hz, self.sample_rate_hz
            )));
        }
        Ok(())
    }
}

/// OFDM symbol geometry: 256-point transform with a 1/8 cyclic prefix.
pub const OFDM_FFT_SIZE: usize = 256;
pub const OFDM_CP_LEN: usize = OFDM_FFT_SIZE / 8;

fn qpsk(rng: &mut ChaCha8Rng) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match rng.random_range(0u8..4) {
        0 => Complex64::new(s, s),
        1 => Complex64::new(-s, s),
        2 => Complex64::new(-s, -s),
        _ => Complex64::new(s, -s),
    }
}

fn ofdm_like(n: usize, cfg: &WaveformConfig, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let spacing = cfg.sample_rate_hz / OFDM_FFT_SIZE as f64;
    let half = ((cfg.occupied_bandwidth_hz / spacing / 2.0).round() as usize)
        .clamp(1, OFDM_FFT_SIZE / 2 - 1);
    let ifft = FftPlanner::new().plan_fft_inverse(OFDM_FFT_SIZE);

    let mut out = Vec::with_capacity(n + OFDM_FFT_SIZE + OFDM_CP_LEN);
    let mut freq = vec![Complex64::default(); OFDM_FFT_SIZE];
    while out.len() < n {
        for slot in freq.iter_mut() {
            *slot = Complex64::default();
        }
        for k in 1..=half {
            freq[k] = qpsk(rng);
            freq[OFDM_FFT_SIZE - k] = qpsk(rng);
        }
        ifft.process(&mut freq);
        out.extend_from_slice(&freq[OFDM_FFT_SIZE - OFDM_CP_LEN..]);
        out.extend_from_slice(&freq);
    }
    out.truncate(n);
    out
}

fn bandlimited_noise(n: usize, cfg: &WaveformConfig, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| {
            Complex64::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let half_bw = cfg.occupied_bandwidth_hz / 2.0;
    for (i, slot) in buf.iter_mut().enumerate() {
        let f = if i <= n / 2 {
            i as f64 * cfg.sample_rate_hz / n as f64
        } else {
            (i as f64 - n as f64) * cfg.sample_rate_hz / n as f64
        };
        if f.abs() > half_bw {
            *slot = Complex64::default();
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

/// Synthesizes the unit-power transmit capture for `cfg`.
pub fn gen_tx_signal(cfg: &WaveformConfig) -> Result<IqCapture> {
    cfg.validate()?;
    let n = (cfg.duration_s * cfg.sample_rate_hz).round() as usize;
    if n == 0 {
        return Err(Error::Config(format!(
            "duration {} s yields no samples at {} Sa/s",
            cfg.duration_s, cfg.sample_rate_hz
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let buf = match cfg.kind {
        WaveformKind::OfdmLike => ofdm_like(n, cfg, &mut rng),
        WaveformKind::BandlimitedNoise => bandlimited_noise(n, cfg, &mut rng),
    };
    let power = buf.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
    if power <= 0.0 {
        return Err(Error::Config("generated waveform has zero power".into()));
    }
    let scale = 1.0 / power.sqrt();
    Ok(IqCapture {
        samples: buf
            .into_iter()
            .map(|c| Complex::new((c.re * scale) as f32, (c.im * scale) as f32))
            .collect(),
        sample_rate_hz: cfg.sample_rate_hz,
        start_time_s: 0.0,
        channel_role: ChannelRole::Transmit,
        receiver_id: None,
        cleaned: false,
    })
}

/// One static propagation path: a complex gain at a fixed delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterPath {
    pub gain: Complex64,
    pub delay_s: f64,
}

/// How the target echo amplitude is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetGainModel {
    /// Fixed complex gain regardless of geometry.
    Constant { gain: Complex64 },
    /// Gain scaled by `reference_range_product_m2 / (r_tx * r_rx)`, the
    /// bistatic spreading relative to a reference range product.
    BistaticRangeScaled {
        gain: Complex64,
        reference_range_product_m2: f64,
    },
}

impl TargetGainModel {
    fn eval(&self, r_tx_m: f64, r_rx_m: f64) -> Complex64 {
        match self {
            TargetGainModel::Constant { gain } => *gain,
            TargetGainModel::BistaticRangeScaled {
                gain,
                reference_range_product_m2,
            } => gain * (reference_range_product_m2 / (r_tx_m * r_rx_m)),
        }
    }
}

/// Pulsed interference line offset from the target Doppler, mimicking a
/// rotor flash that appears in a fraction of the detection instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroDopplerConfig {
    pub offset_hz: f64,
    pub gain: Complex64,
    pub pulse_period_s: f64,
    pub pulse_duration_s: f64,
    /// Uniform relative amplitude variation applied per pulse.
    #[serde(default)]
    pub amplitude_jitter: f64,
}

fn complex_one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// Channel settings shared by the reference and surveillance simulators.
///
/// The reference channel uses `los_gain`, `los_delay_s`, and `noise_power`.
/// The surveillance channel uses `clutter_paths` (direct-path breakthrough
/// and static multipath), `target`, `micro_doppler`, and `noise_power`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    #[serde(default = "complex_one")]
    pub los_gain: Complex64,
    #[serde(default)]
    pub los_delay_s: f64,
    #[serde(default)]
    pub clutter_paths: Vec<ClutterPath>,
    #[serde(default)]
    pub target: Option<TargetGainModel>,
    #[serde(default)]
    pub micro_doppler: Option<MicroDopplerConfig>,
    #[serde(default)]
    pub noise_power: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            los_gain: complex_one(),
            los_delay_s: 0.0,
            clutter_paths: vec![],
            target: None,
            micro_doppler: None,
            noise_power: 0.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.los_delay_s < 0.0 || !self.los_delay_s.is_finite() {
            return Err(Error::Config(format!(
                "line-of-sight delay must be non-negative, got {}",
                self.los_delay_s
            )));
        }
        for (i, p) in self.clutter_paths.iter().enumerate() {
            if p.delay_s < 0.0 || !p.delay_s.is_finite() {
                return Err(Error::Config(format!(
                    "clutter path {i} has invalid delay {}",
                    p.delay_s
                )));
            }
        }
        if self.noise_power < 0.0 {
            return Err(Error::Config(format!(
                "noise power must be non-negative, got {}",
                self.noise_power
            )));
        }
        if let Some(md) = &self.micro_doppler {
            if self.target.is_none() {
                return Err(Error::Config(
                    "micro-Doppler interference requires a target echo".into(),
                ));
            }
            if !(md.pulse_period_s > 0.0)
                || !(md.pulse_duration_s > 0.0)
                || md.pulse_duration_s > md.pulse_period_s
            {
                return Err(Error::Config(
                    "micro-Doppler pulses need 0 < duration <= period".into(),
                ));
            }
            if md.amplitude_jitter < 0.0 {
                return Err(Error::Config(
                    "micro-Doppler amplitude jitter must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Linearly interpolated sample of `x` at fractional position `n - delay`.
/// Positions before the first sample read as zero.
fn delayed(x: &[Complex64], n: usize, delay_samples: f64) -> Complex64 {
    let pos = n as f64 - delay_samples;
    let base = pos.floor();
    let frac = pos - base;
    let fetch = |i: f64| -> Complex64 {
        if i < 0.0 || i >= x.len() as f64 {
            Complex64::default()
        } else {
            x[i as usize]
        }
    };
    if frac == 0.0 {
        fetch(base)
    } else {
        fetch(base) * (1.0 - frac) + fetch(base + 1.0) * frac
    }
}

fn add_noise(buf: &mut [Complex64], power: f64, rng: &mut ChaCha8Rng) {
    if power <= 0.0 {
        return;
    }
    let sigma = (power / 2.0).sqrt();
    for slot in buf.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *slot += Complex64::new(sigma * re, sigma * im);
    }
}

fn to_f32(buf: Vec<Complex64>) -> Vec<Complex<f32>> {
    buf.into_iter()
        .map(|c| Complex::new(c.re as f32, c.im as f32))
        .collect()
}

/// Simulates the reference channel: a line-of-sight copy of the transmit
/// capture with complex gain, fractional-sample delay, and additive noise.
pub fn apply_reference_channel(
    tx: &IqCapture,
    cfg: &ChannelConfig,
    receiver_id: ReceiverId,
    seed: u64,
) -> Result<IqCapture> {
    if tx.channel_role != ChannelRole::Transmit {
        return Err(Error::Config(format!(
            "reference channel input must be a transmit capture, got {}",
            tx.channel_role
        )));
    }
    cfg.validate()?;
    let x = tx.samples_f64();
    let delay = cfg.los_delay_s * tx.sample_rate_hz;
    let mut out: Vec<Complex64> = (0..x.len())
        .map(|n| cfg.los_gain * delayed(&x, n, delay))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise(&mut out, cfg.noise_power, &mut rng);
    Ok(IqCapture {
        samples: to_f32(out),
        sample_rate_hz: tx.sample_rate_hz,
        start_time_s: tx.start_time_s,
        channel_role: ChannelRole::Reference,
        receiver_id: Some(receiver_id),
        cleaned: false,
    })
}

/// Simulates the surveillance channel for one receiver.
///
/// The output is the sum of the configured static clutter paths, the target
/// echo, optional pulsed micro-Doppler interference, and noise. The echo
/// carrier phase at sample `n` is `2 pi * sum_{m<=n} f(m T_s) T_s` with `f`
/// the instantaneous bistatic Doppler along the ground-truth track, and its
/// envelope is delayed by the instantaneous bistatic excess relative to the
/// baseline between transmitter and receiver.
pub fn apply_surveillance_channel(
    tx: &IqCapture,
    track: &GroundTruthTrack,
    geom: &ScenarioGeometry,
    receiver_id: ReceiverId,
    cfg: &ChannelConfig,
    seed: u64,
) -> Result<IqCapture> {
    if tx.channel_role != ChannelRole::Transmit {
        return Err(Error::Config(format!(
            "surveillance channel input must be a transmit capture, got {}",
            tx.channel_role
        )));
    }
    cfg.validate()?;
    geom.validate()?;
    let n = tx.len();
    let fs = tx.sample_rate_hz;
    let ts = 1.0 / fs;
    let t0 = tx.start_time_s;
    if cfg.target.is_some() && n > 0 {
        let t_end = t0 + (n - 1) as f64 * ts;
        if t0 < track.start_time_s() - 1e-9 || t_end > track.end_time_s() + 1e-9 {
            return Err(Error::Coverage(format!(
                "capture spans [{t0:.6}, {t_end:.6}] s but the track covers [{:.6}, {:.6}] s",
                track.start_time_s(),
                track.end_time_s()
            )));
        }
    }

    let x = tx.samples_f64();
    let mut out = vec![Complex64::default(); n];

    for path in &cfg.clutter_paths {
        let delay = path.delay_s * fs;
        for (i, slot) in out.iter_mut().enumerate() {
            *slot += path.gain * delayed(&x, i, delay);
        }
    }

    if let Some(model) = &cfg.target {
        let tx_pos = geom.tx(receiver_id);
        let rx_pos = geom.rx(receiver_id);
        let lambda = geom.lambda_m(receiver_id);
        let baseline = tx_pos.distance_to(rx_pos);

        // Per-pulse amplitude factors for the interference line, drawn
        // up front so the noise stream below is unaffected.
        let md = cfg.micro_doppler.as_ref();
        let md_factors: Vec<f64> = md.map_or(vec![], |md| {
            let pulses = (n as f64 * ts / md.pulse_period_s).ceil() as usize + 1;
            let mut md_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "micro_doppler"));
            (0..pulses)
                .map(|_| {
                    (1.0 + md.amplitude_jitter * (2.0 * md_rng.random::<f64>() - 1.0)).max(0.0)
                })
                .collect()
        });

        let mut phase = 0.0;
        let mut md_phase = 0.0;
        for i in 0..n {
            let t = t0 + i as f64 * ts;
            let (p, v) = track.state_at(t)?;
            let r_tx = p.distance_to(tx_pos);
            let r_rx = p.distance_to(rx_pos);
            if r_tx < 1e-9 || r_rx < 1e-9 {
                return Err(Error::SingularGeometry(format!(
                    "target crosses a node at t = {t:.6} s"
                )));
            }
            let bx = (p.x - tx_pos.x) / r_tx + (p.x - rx_pos.x) / r_rx;
            let by = (p.y - tx_pos.y) / r_tx + (p.y - rx_pos.y) / r_rx;
            let doppler = -(bx * v.x + by * v.y) / lambda;
            phase += 2.0 * std::f64::consts::PI * doppler * ts;

            let delay = (r_tx + r_rx - baseline) / SPEED_OF_LIGHT_MPS * fs;
            let envelope = delayed(&x, i, delay);
            out[i] += model.eval(r_tx, r_rx) * envelope * Complex64::from_polar(1.0, phase);

            if let Some(md) = md {
                md_phase += 2.0 * std::f64::consts::PI * (doppler + md.offset_hz) * ts;
                let elapsed = i as f64 * ts;
                let pulse = (elapsed / md.pulse_period_s).floor();
                if elapsed - pulse * md.pulse_period_s < md.pulse_duration_s {
                    out[i] += md.gain
                        * md_factors[pulse as usize]
                        * envelope
                        * Complex64::from_polar(1.0, md_phase);
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise(&mut out, cfg.noise_power, &mut rng);
    Ok(IqCapture {
        samples: to_f32(out),
        sample_rate_hz: fs,
        start_time_s: t0,
        channel_role: ChannelRole::Surveillance,
        receiver_id: Some(receiver_id),
        cleaned: false,
    })
}
