//! Canonical labeled segment and its on-disk format.
//!
//! Format "PFSG" v1, little-endian throughout:
//!
//! ```text
//! "PFSG" | u16 version | u16 patient len + bytes | u16 segment-id len + bytes
//! | u32 channels | f64 rate Hz | f64 start s | f64 duration s
//! | u8 label | u8 provenance | u64 samples per channel
//! | f32 × channels×samples payload (channel-major) | u32 CRC32
//! ```
//!
//! The trailing CRC32 (IEEE) covers every preceding byte including the
//! magic, so any single-byte corruption is caught before fields are trusted.

use crate::types::{Label, Provenance};
use crate::wire::{self, WireError};
use std::fs;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"PFSG";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("bad magic {0:?}, expected \"PFSG\"")]
    BadMagic(Vec<u8>),
    #[error("unsupported segment version {0} (reader supports {VERSION})")]
    Version(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("invalid field {field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("segment io: {0}")]
    Io(#[from] std::io::Error),
}

/// A labeled multichannel window of signal, real or synthetic. Samples are
/// channel-major: channel 0's full run, then channel 1's, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSegment {
    pub patient_id: String,
    pub segment_id: String,
    pub channels: usize,
    pub sampling_rate_hz: f64,
    pub start_time_s: f64,
    pub duration_s: f64,
    pub label: Label,
    pub provenance: Provenance,
    samples: Vec<f32>,
}

impl SignalSegment {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        patient_id: &str,
        segment_id: &str,
        channels: usize,
        sampling_rate_hz: f64,
        start_time_s: f64,
        duration_s: f64,
        label: Label,
        provenance: Provenance,
        samples: Vec<f32>,
    ) -> Result<Self, SegmentError> {
        if channels == 0 {
            return Err(SegmentError::Invalid {
                field: "channels",
                message: "must be positive".into(),
            });
        }
        if !(sampling_rate_hz > 0.0) || !(duration_s > 0.0) {
            return Err(SegmentError::Invalid {
                field: "rate/duration",
                message: format!("rate {sampling_rate_hz} Hz, duration {duration_s} s"),
            });
        }
        let per_channel_f = sampling_rate_hz * duration_s;
        let per_channel = per_channel_f.round() as usize;
        if (per_channel_f - per_channel as f64).abs() > 1e-6 {
            return Err(SegmentError::Invalid {
                field: "duration",
                message: format!(
                    "duration × rate must be integral, got {per_channel_f} samples"
                ),
            });
        }
        if samples.len() != channels * per_channel {
            return Err(SegmentError::Invalid {
                field: "samples",
                message: format!(
                    "expected {} × {} = {} samples, got {}",
                    channels,
                    per_channel,
                    channels * per_channel,
                    samples.len()
                ),
            });
        }
        Ok(SignalSegment {
            patient_id: patient_id.into(),
            segment_id: segment_id.into(),
            channels,
            sampling_rate_hz,
            start_time_s,
            duration_s,
            label,
            provenance,
            samples,
        })
    }

    pub fn samples_per_channel(&self) -> usize {
        self.samples.len() / self.channels
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.samples_per_channel();
        &self.samples[c * n..(c + 1) * n]
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn end_time_s(&self) -> f64 {
        self.start_time_s + self.duration_s
    }

    /// Same metadata, new payload (used by filtering).
    pub fn with_samples(&self, samples: Vec<f32>) -> Result<Self, SegmentError> {
        SignalSegment::new(
            &self.patient_id,
            &self.segment_id,
            self.channels,
            self.sampling_rate_hz,
            self.start_time_s,
            self.duration_s,
            self.label,
            self.provenance,
            samples,
        )
    }
}

pub fn write_segment(segment: &SignalSegment) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + segment.samples.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    wire::write_string(&mut out, &segment.patient_id);
    wire::write_string(&mut out, &segment.segment_id);
    out.extend_from_slice(&(segment.channels as u32).to_le_bytes());
    out.extend_from_slice(&segment.sampling_rate_hz.to_le_bytes());
    out.extend_from_slice(&segment.start_time_s.to_le_bytes());
    out.extend_from_slice(&segment.duration_s.to_le_bytes());
    out.push(segment.label.code());
    out.push(segment.provenance.code());
    out.extend_from_slice(&(segment.samples_per_channel() as u64).to_le_bytes());
    for &v in &segment.samples {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn read_segment(bytes: &[u8]) -> Result<SignalSegment, SegmentError> {
    if bytes.len() < MAGIC.len() + 6 {
        return Err(WireError::Truncated("segment header").into());
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(SegmentError::Checksum { stored, computed });
    }

    let mut cur = body;
    let magic = wire::take(&mut cur, 4, "magic")?;
    if magic != MAGIC {
        return Err(SegmentError::BadMagic(magic.to_vec()));
    }
    let version = wire::read_u16(&mut cur, "version")?;
    if version != VERSION {
        return Err(SegmentError::Version(version));
    }
    let patient_id = wire::read_string(&mut cur, "patient id")?;
    let segment_id = wire::read_string(&mut cur, "segment id")?;
    let channels = wire::read_u32(&mut cur, "channel count")? as usize;
    let sampling_rate_hz = wire::read_f64(&mut cur, "sampling rate")?;
    let start_time_s = wire::read_f64(&mut cur, "start time")?;
    let duration_s = wire::read_f64(&mut cur, "duration")?;
    let label_code = wire::read_u8(&mut cur, "label")?;
    let prov_code = wire::read_u8(&mut cur, "provenance")?;
    let per_channel = wire::read_u64(&mut cur, "sample count")? as usize;
    let samples = wire::read_f32_vec(&mut cur, channels * per_channel, "sample payload")?;
    if !cur.is_empty() {
        return Err(SegmentError::Invalid {
            field: "payload",
            message: format!("{} trailing bytes", cur.len()),
        });
    }
    let label = Label::from_code(label_code).ok_or(SegmentError::Invalid {
        field: "label",
        message: format!("unknown code {label_code}"),
    })?;
    let provenance = Provenance::from_code(prov_code).ok_or(SegmentError::Invalid {
        field: "provenance",
        message: format!("unknown code {prov_code}"),
    })?;
    SignalSegment::new(
        &patient_id,
        &segment_id,
        channels,
        sampling_rate_hz,
        start_time_s,
        duration_s,
        label,
        provenance,
        samples,
    )
}

pub fn save_segment(segment: &SignalSegment, path: &Path) -> Result<(), SegmentError> {
    Ok(fs::write(path, write_segment(segment))?)
}

pub fn load_segment(path: &Path) -> Result<SignalSegment, SegmentError> {
    read_segment(&fs::read(path)?)
}
