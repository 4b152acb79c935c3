//! Trajectory reconstruction from two smoothed Doppler tracks.
//!
//! At each detection instance the two bistatic Doppler shifts are a linear
//! function of the target velocity through a 2x2 matrix whose rows are the
//! wavelength-scaled bistatic bisector directions. Inverting that matrix
//! turns the Doppler pair into a velocity estimate, and dead reckoning the
//! velocity sequence from an initial position fix yields the trajectory. The
//! matrix is rebuilt at every estimated position, so initial-position error
//! perturbs but does not invalidate the reconstruction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detection::DopplerTrack;
use crate::error::{Error, Result};
use crate::scenario::{bistatic_bisector, Position2D, ReceiverId, ScenarioGeometry, Velocity2D};

/// Condition numbers above this mark the Doppler matrix as too ill-conditioned
/// to invert.
pub const CONDITION_GUARD_DEFAULT: f64 = 1e6;

/// Bearing pairs closer than this to parallel are rejected by triangulation.
const PARALLEL_LIMIT_DEG: f64 = 0.1;

/// Linear map from target velocity to the pair of bistatic Doppler shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerMatrix {
    /// Row-major entries; row `i` maps velocity to the Doppler of chain `i+1`.
    pub m: [[f64; 2]; 2],
    pub condition_number: f64,
}

impl DopplerMatrix {
    pub fn is_degenerate(&self, guard: f64) -> bool {
        !self.condition_number.is_finite() || self.condition_number > guard
    }
}

/// Spectral condition number of a 2x2 matrix from its singular values.
fn condition_number_2x2(m: &[[f64; 2]; 2]) -> f64 {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let t = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (t * t - 4.0 * det * det).max(0.0).sqrt();
    let s_max_sq = (t + disc) / 2.0;
    let s_min_sq = (t - disc) / 2.0;
    if s_min_sq <= 0.0 {
        f64::INFINITY
    } else {
        (s_max_sq / s_min_sq).sqrt()
    }
}

/// Doppler matrix for a target at `p` under the given geometry.
pub fn build_doppler_matrix(p: Position2D, geom: &ScenarioGeometry) -> Result<DopplerMatrix> {
    let mut m = [[0.0; 2]; 2];
    for id in ReceiverId::BOTH {
        let (bx, by) = bistatic_bisector(p, geom.tx(id), geom.rx(id))?;
        let scale = -1.0 / geom.lambda_m(id);
        m[id.index()] = [scale * bx, scale * by];
    }
    Ok(DopplerMatrix {
        m,
        condition_number: condition_number_2x2(&m),
    })
}

/// Solves the Doppler pair for the target velocity, using the default
/// condition guard.
pub fn invert_velocity(f1_hz: f64, f2_hz: f64, d: &DopplerMatrix) -> Result<Velocity2D> {
    invert_velocity_with_guard(f1_hz, f2_hz, d, CONDITION_GUARD_DEFAULT)
}

pub fn invert_velocity_with_guard(
    f1_hz: f64,
    f2_hz: f64,
    d: &DopplerMatrix,
    guard: f64,
) -> Result<Velocity2D> {
    if d.is_degenerate(guard) {
        return Err(Error::DegenerateGeometry {
            condition_number: d.condition_number,
        });
    }
    let det = d.m[0][0] * d.m[1][1] - d.m[0][1] * d.m[1][0];
    Ok(Velocity2D::new(
        (d.m[1][1] * f1_hz - d.m[0][1] * f2_hz) / det,
        (d.m[0][0] * f2_hz - d.m[1][0] * f1_hz) / det,
    ))
}

/// One dead-reckoned state of the reconstructed trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub k: usize,
    pub position: Position2D,
    pub velocity: Velocity2D,
    pub condition_number: f64,
}

/// Reconstructed trajectory over a contiguous run of detection instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEstimate {
    pub td_s: f64,
    pub points: Vec<TrackPoint>,
}

impl TrackEstimate {
    /// Position reached after the final velocity step.
    pub fn final_position(&self) -> Option<Position2D> {
        self.points
            .last()
            .map(|p| p.position.advanced(p.velocity, self.td_s))
    }
}

/// Trims two Doppler tracks to the detection instances they share.
pub fn align_spans(t1: &DopplerTrack, t2: &DopplerTrack) -> Result<(DopplerTrack, DopplerTrack)> {
    let (Some(a1), Some(a2)) = (t1.first_k(), t2.first_k()) else {
        return Err(Error::Coverage(
            "cannot align an empty Doppler track".into(),
        ));
    };
    let start = a1.max(a2);
    let end = t1.last_k().unwrap().min(t2.last_k().unwrap());
    if end < start {
        return Err(Error::Coverage(format!(
            "Doppler tracks share no instances (spans end at {} and start at {})",
            end, start
        )));
    }
    Ok((t1.slice(start, end), t2.slice(start, end)))
}

/// Dead-reckons the trajectory from `p0` using one velocity solve per
/// detection instance.
///
/// `track1` and `track2` must cover the same contiguous instance range (see
/// [`align_spans`]). The Doppler matrix is rebuilt at each estimated position;
/// if its condition number exceeds `condition_guard` the error carries the
/// partial trajectory reconstructed so far.
pub fn integrate_trajectory(
    p0: Position2D,
    track1: &DopplerTrack,
    track2: &DopplerTrack,
    geom: &ScenarioGeometry,
    td_s: f64,
    condition_guard: f64,
) -> Result<TrackEstimate> {
    if !(td_s > 0.0) {
        return Err(Error::Config(format!(
            "detection period must be positive, got {td_s}"
        )));
    }
    if track1.entries().is_empty() || track2.entries().is_empty() {
        return Err(Error::Coverage(
            "cannot integrate an empty Doppler track".into(),
        ));
    }
    if let (Some(id1), Some(id2)) = (track1.receiver_id, track2.receiver_id) {
        if (id1, id2) != (ReceiverId::Rx1, ReceiverId::Rx2) {
            return Err(Error::Config(format!(
                "tracks must be passed in receiver order (rx1, rx2), got ({id1}, {id2})"
            )));
        }
    }
    if track1.entries().len() != track2.entries().len() || track1.first_k() != track2.first_k() {
        return Err(Error::Alignment(
            "Doppler tracks cover different instance ranges".into(),
        ));
    }

    let mut points = Vec::with_capacity(track1.entries().len());
    let mut p = p0;
    for (e1, e2) in track1.entries().iter().zip(track2.entries()) {
        let fail = |condition_number: f64, points: Vec<TrackPoint>| Error::DegenerateMidTrack {
            at_instance: e1.k,
            condition_number,
            partial: Box::new(TrackEstimate { td_s, points }),
        };
        let d = match build_doppler_matrix(p, geom) {
            Ok(d) => d,
            Err(_) => return Err(fail(f64::INFINITY, points)),
        };
        let v = match invert_velocity_with_guard(e1.smoothed(), e2.smoothed(), &d, condition_guard)
        {
            Ok(v) => v,
            Err(_) => return Err(fail(d.condition_number, points)),
        };
        points.push(TrackPoint {
            k: e1.k,
            position: p,
            velocity: v,
            condition_number: d.condition_number,
        });
        p = p.advanced(v, td_s);
    }
    Ok(TrackEstimate { td_s, points })
}

/// Intersects two bearing rays, one from each receiver.
///
/// Bearings are in degrees counterclockwise from the +x axis. Pairs within
/// 0.1 degrees of parallel are rejected.
pub fn triangulate_aoa(
    rx1: Position2D,
    bearing1_deg: f64,
    rx2: Position2D,
    bearing2_deg: f64,
) -> Result<Position2D> {
    let (s1, c1) = bearing1_deg.to_radians().sin_cos();
    let (s2, c2) = bearing2_deg.to_radians().sin_cos();
    let cross = c1 * s2 - s1 * c2;
    if cross.abs() < PARALLEL_LIMIT_DEG.to_radians().sin() {
        return Err(Error::NoIntersection {
            separation_deg: cross.abs().asin().to_degrees(),
        });
    }
    let dx = rx2.x - rx1.x;
    let dy = rx2.y - rx1.y;
    let t1 = (dx * s2 - dy * c2) / cross;
    Ok(Position2D::new(rx1.x + t1 * c1, rx1.y + t1 * s1))
}

/// Re-fixes an initial position through bearing-noisy triangulation.
///
/// The true bearings from both receivers to `p0_true` are perturbed with
/// independent zero-mean Gaussian noise of the given standard deviation and
/// intersected again, mimicking an angle-of-arrival initialization.
pub fn perturb_initial_location(
    p0_true: Position2D,
    geom: &ScenarioGeometry,
    bearing_noise_std_deg: f64,
    seed: u64,
) -> Result<Position2D> {
    if bearing_noise_std_deg < 0.0 {
        return Err(Error::Config(format!(
            "bearing noise must be non-negative, got {bearing_noise_std_deg}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bearings = [0.0; 2];
    for id in ReceiverId::BOTH {
        let rx = geom.rx(id);
        let dx = p0_true.x - rx.x;
        let dy = p0_true.y - rx.y;
        if dx.hypot(dy) < 1e-9 {
            return Err(Error::SingularGeometry(format!(
                "initial position {p0_true} sits on receiver {id}"
            )));
        }
        let noise: f64 = StandardNormal.sample(&mut rng);
        bearings[id.index()] = dy.atan2(dx).to_degrees() + bearing_noise_std_deg * noise;
    }
    triangulate_aoa(geom.rx1, bearings[0], geom.rx2, bearings[1])
}
