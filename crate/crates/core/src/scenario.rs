//! Scenario geometry, ground-truth trajectories, and the forward bistatic
//! Doppler model.
//!
//! A scenario holds two illuminator/receiver pairs and a target track in the
//! horizontal plane. The Doppler shift observed on pair `i` is
//!
//! ```text
//! f_i = -(1/lambda_i) * (u_tx + u_rx) . v
//! ```
//!
//! where `u_tx` and `u_rx` are unit vectors from the transmitter and the
//! receiver toward the target and `v` is the target velocity. Everything
//! downstream (channel simulation, Doppler-matrix inversion, evaluation)
//! shares this one implementation.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT_MPS: f64 = 299_792_458.0;

/// Upper bound on commanded trajectory speed; small multirotors top out well
/// below this and faster tracks void the narrowband assumptions used by the
/// detector.
pub const MAX_UAV_SPEED_MPS: f64 = 15.0;

/// Distances below this are treated as coincident points.
const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position2D {
    pub x: f64,
    pub y: f64,
}

impl Position2D {
    pub fn new(x: f64, y: f64) -> Self {
        Position2D { x, y }
    }

    pub fn distance_to(self, other: Position2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Position reached after moving at `v` for `dt_s` seconds.
    pub fn advanced(self, v: Velocity2D, dt_s: f64) -> Position2D {
        Position2D::new(self.x + v.x * dt_s, self.y + v.y * dt_s)
    }
}

impl fmt::Display for Position2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Velocity2D {
    pub x: f64,
    pub y: f64,
}

impl Velocity2D {
    pub fn new(x: f64, y: f64) -> Self {
        Velocity2D { x, y }
    }

    pub fn zero() -> Self {
        Velocity2D { x: 0.0, y: 0.0 }
    }

    pub fn speed(self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Identifies one of the two receive chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverId {
    Rx1,
    Rx2,
}

impl ReceiverId {
    pub const BOTH: [ReceiverId; 2] = [ReceiverId::Rx1, ReceiverId::Rx2];

    pub fn index(self) -> usize {
        match self {
            ReceiverId::Rx1 => 0,
            ReceiverId::Rx2 => 1,
        }
    }
}

impl fmt::Display for ReceiverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReceiverId::Rx1 => write!(f, "rx1"),
            ReceiverId::Rx2 => write!(f, "rx2"),
        }
    }
}

/// Unit vector pointing from `from` toward `to`.
fn unit_toward(from: Position2D, to: Position2D) -> Result<(f64, f64)> {
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    let r = dx.hypot(dy);
    if r < GEOM_EPS {
        return Err(Error::SingularGeometry(format!(
            "target at {to} coincides with a node at {from}"
        )));
    }
    Ok((dx / r, dy / r))
}

/// Sum of the transmitter-to-target and receiver-to-target unit vectors.
///
/// This is the direction along which target motion produces bistatic Doppler;
/// it is the row direction of the Doppler matrix before wavelength scaling.
pub fn bistatic_bisector(p: Position2D, tx: Position2D, rx: Position2D) -> Result<(f64, f64)> {
    let (ux_t, uy_t) = unit_toward(tx, p)?;
    let (ux_r, uy_r) = unit_toward(rx, p)?;
    Ok((ux_t + ux_r, uy_t + uy_r))
}

/// Bistatic Doppler shift in Hz for a target at `p` moving with `v`.
pub fn true_bistatic_doppler(
    p: Position2D,
    v: Velocity2D,
    tx: Position2D,
    rx: Position2D,
    lambda_m: f64,
) -> Result<f64> {
    if !(lambda_m > 0.0) || !lambda_m.is_finite() {
        return Err(Error::Config(format!(
            "wavelength must be positive and finite, got {lambda_m}"
        )));
    }
    let (bx, by) = bistatic_bisector(p, tx, rx)?;
    Ok(-(bx * v.x + by * v.y) / lambda_m)
}

/// Positions of both illuminators and receivers plus the two carrier
/// wavelengths. `rx1` anchors the local frame at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGeometry {
    pub tx1: Position2D,
    pub tx2: Position2D,
    pub rx1: Position2D,
    pub rx2: Position2D,
    pub lambda1_m: f64,
    pub lambda2_m: f64,
}

impl ScenarioGeometry {
    pub fn new(
        tx1: Position2D,
        tx2: Position2D,
        rx1: Position2D,
        rx2: Position2D,
        lambda1_m: f64,
        lambda2_m: f64,
    ) -> Result<Self> {
        let g = ScenarioGeometry {
            tx1,
            tx2,
            rx1,
            rx2,
            lambda1_m,
            lambda2_m,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rx1.x.abs() > GEOM_EPS || self.rx1.y.abs() > GEOM_EPS {
            return Err(Error::Config(format!(
                "rx1 anchors the local frame and must sit at the origin, got {}",
                self.rx1
            )));
        }
        if self.rx2.distance_to(self.rx1) < GEOM_EPS {
            return Err(Error::Config(
                "receivers must be spatially separated".into(),
            ));
        }
        for (tx, rx, label) in [
            (self.tx1, self.rx1, "pair 1"),
            (self.tx2, self.rx2, "pair 2"),
        ] {
            if tx.distance_to(rx) < GEOM_EPS {
                return Err(Error::Config(format!(
                    "{label}: transmitter and receiver coincide at {tx}"
                )));
            }
        }
        for lambda in [self.lambda1_m, self.lambda2_m] {
            if !(lambda > 0.0) || !lambda.is_finite() {
                return Err(Error::Config(format!(
                    "wavelength must be positive and finite, got {lambda}"
                )));
            }
        }
        Ok(())
    }

    pub fn tx(&self, id: ReceiverId) -> Position2D {
        match id {
            ReceiverId::Rx1 => self.tx1,
            ReceiverId::Rx2 => self.tx2,
        }
    }

    pub fn rx(&self, id: ReceiverId) -> Position2D {
        match id {
            ReceiverId::Rx1 => self.rx1,
            ReceiverId::Rx2 => self.rx2,
        }
    }

    pub fn lambda_m(&self, id: ReceiverId) -> f64 {
        match id {
            ReceiverId::Rx1 => self.lambda1_m,
            ReceiverId::Rx2 => self.lambda2_m,
        }
    }

    /// Doppler shift seen by chain `id` for a target at `p` moving with `v`.
    pub fn doppler(&self, p: Position2D, v: Velocity2D, id: ReceiverId) -> Result<f64> {
        true_bistatic_doppler(p, v, self.tx(id), self.rx(id), self.lambda_m(id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub time_s: f64,
    pub position: Position2D,
    pub velocity: Velocity2D,
}

/// Uniformly sampled target trajectory.
///
/// Between samples the track is piecewise linear: sample `k` carries the
/// velocity that moves the target to sample `k + 1`, so positions and
/// velocities are consistent by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTrack {
    sample_period_s: f64,
    samples: Vec<TrackSample>,
}

impl GroundTruthTrack {
    /// Tolerance for the position/velocity consistency invariant.
    const CONSISTENCY_EPS: f64 = 1e-9;

    pub fn new(sample_period_s: f64, samples: Vec<TrackSample>) -> Result<Self> {
        if !(sample_period_s > 0.0) {
            return Err(Error::Config(format!(
                "track sample period must be positive, got {sample_period_s}"
            )));
        }
        if samples.len() < 2 {
            return Err(Error::Config("a track needs at least two samples".into()));
        }
        let t0 = samples[0].time_s;
        for (k, pair) in samples.windows(2).enumerate() {
            let expected_t = t0 + (k + 1) as f64 * sample_period_s;
            if (pair[1].time_s - expected_t).abs() > Self::CONSISTENCY_EPS {
                return Err(Error::Config(format!(
                    "track samples are not uniform at index {}",
                    k + 1
                )));
            }
            let stepped = pair[0].position.advanced(pair[0].velocity, sample_period_s);
            if stepped.distance_to(pair[1].position) > Self::CONSISTENCY_EPS {
                return Err(Error::Config(format!(
                    "velocity at sample {k} does not carry the track to sample {}",
                    k + 1
                )));
            }
        }
        Ok(GroundTruthTrack {
            sample_period_s,
            samples,
        })
    }

    pub fn sample_period_s(&self) -> f64 {
        self.sample_period_s
    }

    pub fn samples(&self) -> &[TrackSample] {
        &self.samples
    }

    pub fn start_time_s(&self) -> f64 {
        self.samples[0].time_s
    }

    pub fn end_time_s(&self) -> f64 {
        self.samples[self.samples.len() - 1].time_s
    }

    pub fn duration_s(&self) -> f64 {
        self.end_time_s() - self.start_time_s()
    }

    /// Position and velocity at an arbitrary time inside the track span.
    pub fn state_at(&self, time_s: f64) -> Result<(Position2D, Velocity2D)> {
        let t0 = self.start_time_s();
        let rel = time_s - t0;
        if rel < -Self::CONSISTENCY_EPS || time_s > self.end_time_s() + Self::CONSISTENCY_EPS {
            return Err(Error::Coverage(format!(
                "time {time_s:.6} s lies outside the track span [{:.6}, {:.6}] s",
                t0,
                self.end_time_s()
            )));
        }
        let idx =
            ((rel / self.sample_period_s).floor().max(0.0) as usize).min(self.samples.len() - 2);
        let s = &self.samples[idx];
        let dt = time_s - s.time_s;
        Ok((s.position.advanced(s.velocity, dt), s.velocity))
    }

    pub fn position_at(&self, time_s: f64) -> Result<Position2D> {
        Ok(self.state_at(time_s)?.0)
    }
}

/// How the trajectory generator treats heading changes at interior waypoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TurnPolicy {
    /// Heading changes instantaneously at the waypoint.
    #[default]
    Instant,
    /// Corners are replaced by circular fillets flown at constant speed and
    /// the given turn rate.
    ConstantRate { rate_deg_per_s: f64 },
}

/// Geometric path primitive used by the trajectory generator.
enum PathSeg {
    Line {
        from: Position2D,
        to: Position2D,
        len: f64,
    },
    Arc {
        center: Position2D,
        radius: f64,
        start_angle_rad: f64,
        sweep_rad: f64,
    },
}

impl PathSeg {
    fn len(&self) -> f64 {
        match self {
            PathSeg::Line { len, .. } => *len,
            PathSeg::Arc {
                radius, sweep_rad, ..
            } => radius * sweep_rad.abs(),
        }
    }

    fn point_at(&self, s: f64) -> Position2D {
        match self {
            PathSeg::Line { from, to, len } => {
                let t = if *len > 0.0 { s / len } else { 0.0 };
                Position2D::new(from.x + t * (to.x - from.x), from.y + t * (to.y - from.y))
            }
            PathSeg::Arc {
                center,
                radius,
                start_angle_rad,
                sweep_rad,
            } => {
                let ang = start_angle_rad + sweep_rad.signum() * s / radius;
                Position2D::new(center.x + radius * ang.cos(), center.y + radius * ang.sin())
            }
        }
    }
}

fn segment_dirs(waypoints: &[Position2D]) -> Result<Vec<(f64, f64, f64)>> {
    let mut dirs = Vec::with_capacity(waypoints.len() - 1);
    for (i, pair) in waypoints.windows(2).enumerate() {
        let len = pair[0].distance_to(pair[1]);
        if len < GEOM_EPS {
            return Err(Error::DegenerateSegment { index: i + 1 });
        }
        dirs.push((
            (pair[1].x - pair[0].x) / len,
            (pair[1].y - pair[0].y) / len,
            len,
        ));
    }
    Ok(dirs)
}

fn build_path(
    waypoints: &[Position2D],
    speed_mps: f64,
    turn_policy: TurnPolicy,
) -> Result<Vec<PathSeg>> {
    let dirs = segment_dirs(waypoints)?;
    let rate_deg = match turn_policy {
        TurnPolicy::Instant => {
            return Ok(dirs
                .iter()
                .zip(waypoints.windows(2))
                .map(|(&(_, _, len), pair)| PathSeg::Line {
                    from: pair[0],
                    to: pair[1],
                    len,
                })
                .collect());
        }
        TurnPolicy::ConstantRate { rate_deg_per_s } => rate_deg_per_s,
    };
    if !(rate_deg > 0.0) {
        return Err(Error::Config(format!(
            "turn rate must be positive, got {rate_deg} deg/s"
        )));
    }
    let radius = speed_mps / rate_deg.to_radians();

    // Cut length consumed at each interior waypoint by its fillet.
    let mut cuts = vec![0.0; waypoints.len()];
    let mut sweeps = vec![0.0; waypoints.len()];
    for i in 1..waypoints.len() - 1 {
        let (d0x, d0y, _) = dirs[i - 1];
        let (d1x, d1y, _) = dirs[i];
        let cos_turn = (d0x * d1x + d0y * d1y).clamp(-1.0, 1.0);
        let turn = cos_turn.acos();
        if turn < 1e-9 {
            continue;
        }
        if (std::f64::consts::PI - turn).abs() < 1e-9 {
            return Err(Error::Config(format!(
                "waypoint {i} reverses heading; a constant-rate turn cannot round it"
            )));
        }
        cuts[i] = radius * (turn / 2.0).tan();
        sweeps[i] = turn * (d0x * d1y - d0y * d1x).signum();
    }
    for (i, &(_, _, len)) in dirs.iter().enumerate() {
        if cuts[i] + cuts[i + 1] > len - GEOM_EPS {
            return Err(Error::Config(format!(
                "segment {i} is too short ({len:.3} m) for the {radius:.3} m turn radius"
            )));
        }
    }

    let mut segs = Vec::new();
    for (i, &(dx, dy, len)) in dirs.iter().enumerate() {
        let a = Position2D::new(waypoints[i].x + cuts[i] * dx, waypoints[i].y + cuts[i] * dy);
        let b = Position2D::new(
            waypoints[i + 1].x - cuts[i + 1] * dx,
            waypoints[i + 1].y - cuts[i + 1] * dy,
        );
        let line_len = len - cuts[i] - cuts[i + 1];
        if line_len > GEOM_EPS {
            segs.push(PathSeg::Line {
                from: a,
                to: b,
                len: line_len,
            });
        }
        let sweep = sweeps[i + 1];
        if sweep != 0.0 {
            // Fillet center sits one radius to the turn side of the incoming
            // tangent point.
            let side = sweep.signum();
            let center = Position2D::new(b.x - side * radius * dy, b.y + side * radius * dx);
            let start_angle_rad = (b.y - center.y).atan2(b.x - center.x);
            segs.push(PathSeg::Arc {
                center,
                radius,
                start_angle_rad,
                sweep_rad: sweep,
            });
        }
    }
    Ok(segs)
}

/// Samples a constant-speed flight along `waypoints` every `sample_period_s`.
///
/// Sample `k` sits at arc length `k * speed * period` along the path; the
/// stored velocities are the finite differences of consecutive positions so
/// the track satisfies the dead-reckoning consistency invariant exactly.
pub fn make_waypoint_trajectory(
    waypoints: &[Position2D],
    speed_mps: f64,
    sample_period_s: f64,
    turn_policy: TurnPolicy,
) -> Result<GroundTruthTrack> {
    if waypoints.len() < 2 {
        return Err(Error::Config(
            "a trajectory needs at least two waypoints".into(),
        ));
    }
    if !(speed_mps > 0.0) || speed_mps > MAX_UAV_SPEED_MPS {
        return Err(Error::Config(format!(
            "speed must lie in (0, {MAX_UAV_SPEED_MPS}] m/s, got {speed_mps}"
        )));
    }
    if !(sample_period_s > 0.0) {
        return Err(Error::Config(format!(
            "sample period must be positive, got {sample_period_s}"
        )));
    }

    let segs = build_path(waypoints, speed_mps, turn_policy)?;
    let total_len: f64 = segs.iter().map(PathSeg::len).sum();
    let duration = total_len / speed_mps;
    let steps = (duration / sample_period_s + 1e-9).floor() as usize;
    if steps < 1 {
        return Err(Error::Config(format!(
            "flight lasts {duration:.3} s, shorter than one {sample_period_s} s sample period"
        )));
    }

    let mut positions = Vec::with_capacity(steps + 1);
    let mut seg_idx = 0;
    let mut seg_start = 0.0;
    for k in 0..=steps {
        let s = (k as f64 * sample_period_s * speed_mps).min(total_len);
        while seg_idx + 1 < segs.len() && s > seg_start + segs[seg_idx].len() {
            seg_start += segs[seg_idx].len();
            seg_idx += 1;
        }
        positions.push(segs[seg_idx].point_at(s - seg_start));
    }

    let samples = (0..=steps)
        .map(|k| {
            let velocity = if k < steps {
                Velocity2D::new(
                    (positions[k + 1].x - positions[k].x) / sample_period_s,
                    (positions[k + 1].y - positions[k].y) / sample_period_s,
                )
            } else if steps >= 1 {
                Velocity2D::new(
                    (positions[steps].x - positions[steps - 1].x) / sample_period_s,
                    (positions[steps].y - positions[steps - 1].y) / sample_period_s,
                )
            } else {
                Velocity2D::zero()
            };
            TrackSample {
                time_s: k as f64 * sample_period_s,
                position: positions[k],
                velocity,
            }
        })
        .collect();
    GroundTruthTrack::new(sample_period_s, samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryPreset {
    UShape,
    Triangle,
}

/// Waypoints for one of the bundled flight patterns.
///
/// `u_shape` flies down, across, and back up the sides of a square of side
/// `size_m`; `triangle` flies a closed equilateral loop of side `size_m`.
/// Both start at `origin` plus the pattern's first corner offset.
pub fn preset_waypoints(
    preset: TrajectoryPreset,
    origin: Position2D,
    size_m: f64,
) -> Vec<Position2D> {
    let o = origin;
    let s = size_m;
    match preset {
        TrajectoryPreset::UShape => vec![
            Position2D::new(o.x, o.y + s),
            Position2D::new(o.x, o.y),
            Position2D::new(o.x + s, o.y),
            Position2D::new(o.x + s, o.y + s),
        ],
        TrajectoryPreset::Triangle => vec![
            Position2D::new(o.x, o.y),
            Position2D::new(o.x + s, o.y),
            Position2D::new(o.x + s / 2.0, o.y + s * 3.0_f64.sqrt() / 2.0),
            Position2D::new(o.x, o.y),
        ],
    }
}

/// Trajectory description inside a scenario file: either a named preset or an
/// explicit waypoint list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrajectorySpec {
    Preset {
        preset: TrajectoryPreset,
        origin: Position2D,
        size_m: f64,
    },
    Waypoints {
        waypoints: Vec<Position2D>,
    },
}

fn default_sample_period() -> f64 {
    0.005
}

/// On-disk scenario description: geometry plus a flight plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub geometry: ScenarioGeometry,
    pub trajectory: TrajectorySpec,
    pub speed_mps: f64,
    #[serde(default = "default_sample_period")]
    pub sample_period_s: f64,
    #[serde(default)]
    pub turn_policy: TurnPolicy,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        let file: ScenarioFile = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("malformed scenario {}: {e}", path.display())))?;
        file.geometry.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn waypoints(&self) -> Vec<Position2D> {
        match &self.trajectory {
            TrajectorySpec::Preset {
                preset,
                origin,
                size_m,
            } => preset_waypoints(*preset, *origin, *size_m),
            TrajectorySpec::Waypoints { waypoints } => waypoints.clone(),
        }
    }

    pub fn build_track(&self) -> Result<GroundTruthTrack> {
        self.geometry.validate()?;
        make_waypoint_trajectory(
            &self.waypoints(),
            self.speed_mps,
            self.sample_period_s,
            self.turn_policy,
        )
    }
}
