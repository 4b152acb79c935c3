//! IQ capture files: little-endian interleaved `f32` I/Q pairs with a JSON
//! sidecar header at `<path>.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ReceiverId;
use crate::waveform::{ChannelRole, IqCapture};

pub const IQ_FORMAT_TAG: &str = "cf32le";

/// Sidecar metadata for an IQ payload file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqFileHeader {
    pub format_tag: String,
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub center_freq_hz: Option<f64>,
    pub start_time_s: f64,
    #[serde(default)]
    pub receiver_id: Option<ReceiverId>,
    pub channel_role: ChannelRole,
    pub sample_count: u64,
    #[serde(default)]
    pub creator_seed: Option<u64>,
    #[serde(default)]
    pub cleaned: bool,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes the payload to `path` and the header to `path.json`.
pub fn write_iq(path: &Path, capture: &IqCapture, center_freq_hz: Option<f64>) -> Result<()> {
    write_iq_with_seed(path, capture, center_freq_hz, None)
}

/// Like [`write_iq`] but records the seed that produced the capture.
pub fn write_iq_with_seed(
    path: &Path,
    capture: &IqCapture,
    center_freq_hz: Option<f64>,
    creator_seed: Option<u64>,
) -> Result<()> {
    let header = IqFileHeader {
        format_tag: IQ_FORMAT_TAG.to_string(),
        sample_rate_hz: capture.sample_rate_hz,
        center_freq_hz,
        start_time_s: capture.start_time_s,
        receiver_id: capture.receiver_id,
        channel_role: capture.channel_role,
        sample_count: capture.samples.len() as u64,
        creator_seed,
        cleaned: capture.cleaned,
    };
    let json = serde_json::to_string_pretty(&header)?;
    std::fs::write(sidecar_path(path), json)?;

    let mut out = BufWriter::new(File::create(path)?);
    for c in &capture.samples {
        out.write_all(&c.re.to_le_bytes())?;
        out.write_all(&c.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a capture written by [`write_iq`].
pub fn read_iq(path: &Path) -> Result<IqCapture> {
    Ok(read_iq_with_header(path)?.0)
}

/// Reads a capture along with its full header.
pub fn read_iq_with_header(path: &Path) -> Result<(IqCapture, IqFileHeader)> {
    let display = path.to_path_buf();
    let sidecar = sidecar_path(path);
    let header_text = std::fs::read_to_string(&sidecar).map_err(|e| Error::MalformedFile {
        path: display.clone(),
        what: "sidecar header",
        detail: format!("{}: {e}", sidecar.display()),
    })?;
    let header: IqFileHeader =
        serde_json::from_str(&header_text).map_err(|e| Error::MalformedFile {
            path: display.clone(),
            what: "sidecar header",
            detail: e.to_string(),
        })?;
    if header.format_tag != IQ_FORMAT_TAG {
        return Err(Error::UnknownFormatTag {
            path: display,
            tag: header.format_tag,
        });
    }
    if !(header.sample_rate_hz > 0.0) {
        return Err(Error::MalformedFile {
            path: display,
            what: "sample rate",
            detail: format!("{}", header.sample_rate_hz),
        });
    }

    let mut payload = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut payload)?;
    if payload.len() % 8 != 0 {
        return Err(Error::TruncatedPayload {
            path: display,
            expected: header.sample_count * 8,
            got: payload.len() as u64,
        });
    }
    let count = (payload.len() / 8) as u64;
    if count != header.sample_count {
        return Err(Error::LengthMismatch {
            path: display,
            header: header.sample_count,
            payload: count,
        });
    }
    let samples = payload
        .chunks_exact(8)
        .map(|chunk| {
            Complex::new(
                f32::from_le_bytes(chunk[0..4].try_into().unwrap()),
                f32::from_le_bytes(chunk[4..8].try_into().unwrap()),
            )
        })
        .collect();
    let capture = IqCapture {
        samples,
        sample_rate_hz: header.sample_rate_hz,
        start_time_s: header.start_time_s,
        channel_role: header.channel_role,
        receiver_id: header.receiver_id,
        cleaned: header.cleaned,
    };
    Ok((capture, header))
}
