//! Batched least-squares clutter cancellation.
//!
//! The surveillance capture is split into short batches. Within each batch
//! the static returns (direct-path breakthrough and fixed multipath) are
//! modeled as a linear combination of delayed copies of the reference
//! capture, fitted by regularized normal equations and subtracted. Echoes
//! whose Doppler shift completes a few cycles per batch fall outside the
//! fitted subspace and pass through essentially unattenuated.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::waveform::{ChannelRole, IqCapture};

/// Settings for the batched canceller.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CancellationConfig {
    /// Length of each independently fitted batch.
    pub batch_duration_s: f64,
    /// Number of reference delay taps spanned by the static-clutter model.
    pub num_delay_taps: usize,
    /// Ridge term relative to the mean tap power.
    pub regularization: f64,
}

impl Default for CancellationConfig {
    fn default() -> Self {
        CancellationConfig {
            batch_duration_s: 0.1,
            num_delay_taps: 8,
            regularization: 1e-9,
        }
    }
}

impl CancellationConfig {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(self.batch_duration_s > 0.0) {
            return Err(Error::Config(format!(
                "batch duration must be positive, got {}",
                self.batch_duration_s
            )));
        }
        if self.num_delay_taps == 0 {
            return Err(Error::Config("need at least one delay tap".into()));
        }
        if self.regularization < 0.0 {
            return Err(Error::Config(format!(
                "regularization must be non-negative, got {}",
                self.regularization
            )));
        }
        let batch = (self.batch_duration_s * sample_rate_hz).round() as usize;
        if batch < self.num_delay_taps {
            return Err(Error::Config(format!(
                "batch of {batch} samples cannot fit {} delay taps",
                self.num_delay_taps
            )));
        }
        Ok(())
    }

    pub fn batch_len(&self, sample_rate_hz: f64) -> usize {
        (self.batch_duration_s * sample_rate_hz).round() as usize
    }
}

/// Solves `a x = b` in place for a small Hermitian positive-definite system
/// using Gaussian elimination with partial pivoting.
fn solve_in_place(a: &mut [Vec<Complex64>], b: &mut [Complex64]) -> Result<()> {
    let k = b.len();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| {
                a[i][col]
                    .norm_sqr()
                    .partial_cmp(&a[j][col].norm_sqr())
                    .unwrap()
            })
            .unwrap();
        if a[pivot][col].norm_sqr() == 0.0 {
            return Err(Error::SingularGeometry(
                "clutter normal equations are singular".into(),
            ));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..k {
            let factor = a[row][col] / a[col][col];
            for c in col..k {
                let sub = factor * a[col][c];
                a[row][c] -= sub;
            }
            let sub = factor * b[col];
            b[row] -= sub;
        }
    }
    for col in (0..k).rev() {
        let mut acc = b[col];
        for c in col + 1..k {
            acc -= a[col][c] * b[c];
        }
        b[col] = acc / a[col][col];
    }
    Ok(())
}

/// Reference sample at global index `i`, reading indices before the capture
/// start as zero.
#[inline]
fn ref_at(x: &[Complex64], i: isize) -> Complex64 {
    if i < 0 {
        Complex64::default()
    } else {
        x[i as usize]
    }
}

fn cancel_batch(
    out: &mut [Complex64],
    reference: &[Complex64],
    base: usize,
    taps: usize,
    regularization: f64,
) -> Result<()> {
    let len = out.len();
    let mut gram = vec![vec![Complex64::default(); taps]; taps];
    let mut rhs = vec![Complex64::default(); taps];
    for k in 0..taps {
        for l in k..taps {
            let mut acc = Complex64::default();
            for i in 0..len {
                let ck = ref_at(reference, (base + i) as isize - k as isize);
                let cl = ref_at(reference, (base + i) as isize - l as isize);
                acc += ck.conj() * cl;
            }
            gram[k][l] = acc;
            gram[l][k] = acc.conj();
        }
        let mut acc = Complex64::default();
        for (i, s) in out.iter().enumerate() {
            acc += ref_at(reference, (base + i) as isize - k as isize).conj() * s;
        }
        rhs[k] = acc;
    }
    let trace: f64 = (0..taps).map(|k| gram[k][k].re).sum();
    if trace <= 0.0 {
        // Nothing to fit against: an all-zero reference batch leaves the
        // surveillance batch untouched.
        return Ok(());
    }
    let ridge = regularization * trace / taps as f64;
    for (k, row) in gram.iter_mut().enumerate() {
        row[k] += ridge;
    }
    solve_in_place(&mut gram, &mut rhs)?;
    for (i, s) in out.iter_mut().enumerate() {
        for (k, w) in rhs.iter().enumerate() {
            *s -= w * ref_at(reference, (base + i) as isize - k as isize);
        }
    }
    Ok(())
}

/// Removes static clutter from a surveillance capture using its paired
/// reference capture. The returned capture is marked `cleaned`.
pub fn cancel_clutter(
    surveillance: &IqCapture,
    reference: &IqCapture,
    cfg: &CancellationConfig,
) -> Result<IqCapture> {
    if surveillance.channel_role != ChannelRole::Surveillance {
        return Err(Error::Config(format!(
            "canceller expects a surveillance capture, got {}",
            surveillance.channel_role
        )));
    }
    if reference.channel_role != ChannelRole::Reference {
        return Err(Error::Config(format!(
            "canceller expects a reference capture, got {}",
            reference.channel_role
        )));
    }
    if surveillance.sample_rate_hz != reference.sample_rate_hz {
        return Err(Error::Alignment(format!(
            "sample rates differ: {} vs {} Sa/s",
            surveillance.sample_rate_hz, reference.sample_rate_hz
        )));
    }
    if surveillance.len() != reference.len() {
        return Err(Error::Alignment(format!(
            "capture lengths differ: {} vs {} samples",
            surveillance.len(),
            reference.len()
        )));
    }
    let fs = surveillance.sample_rate_hz;
    if (surveillance.start_time_s - reference.start_time_s).abs() > 0.5 / fs {
        return Err(Error::Alignment(format!(
            "start times differ by more than half a sample: {} vs {} s",
            surveillance.start_time_s, reference.start_time_s
        )));
    }
    cfg.validate(fs)?;

    let x = reference.samples_f64();
    let mut out = surveillance.samples_f64();
    let batch = cfg.batch_len(fs);
    out.par_chunks_mut(batch)
        .enumerate()
        .try_for_each(|(b, chunk)| {
            cancel_batch(chunk, &x, b * batch, cfg.num_delay_taps, cfg.regularization)
        })?;

    Ok(IqCapture {
        samples: out
            .into_iter()
            .map(|c| num_complex::Complex::new(c.re as f32, c.im as f32))
            .collect(),
        sample_rate_hz: fs,
        start_time_s: surveillance.start_time_s,
        channel_role: ChannelRole::Surveillance,
        receiver_id: surveillance.receiver_id,
        cleaned: true,
    })
}
