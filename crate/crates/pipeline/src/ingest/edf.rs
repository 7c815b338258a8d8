//! European Data Format (EDF) reader and writer.
//!
//! An EDF file is a 256-byte fixed-width ASCII header, one 256-byte header
//! extension per signal, then data records of interleaved 16-bit
//! little-endian samples. Digital values map to physical units through the
//! per-signal affine scaling declared in the header. Samples are kept in
//! digital form so writing a parsed file back is bit-exact; physical values
//! are derived on demand.

use thiserror::Error;

pub const HEADER_LEN: usize = 256;
pub const SIGNAL_HEADER_LEN: usize = 256;

#[derive(Debug, Error)]
pub enum EdfError {
    #[error("bad magic: EDF version field must be '0' padded to 8 bytes, got {0:?}")]
    BadMagic(String),
    #[error("truncated file: {context} needs {needed} bytes, only {got} available")]
    Truncated {
        context: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("header field {field:?} is not numeric: {value:?}")]
    BadNumericField { field: &'static str, value: String },
    #[error("invalid {field}: {message}")]
    InvalidRange { field: &'static str, message: String },
    #[error("file length {got} does not match header: expected {expected} bytes ({records} records of {record_bytes})")]
    LengthMismatch {
        expected: usize,
        got: usize,
        records: usize,
        record_bytes: usize,
    },
}

/// One signal's header entry plus its digital samples, concatenated across
/// data records.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfSignal {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i64,
    pub digital_max: i64,
    pub prefiltering: String,
    pub samples_per_record: usize,
    pub digital: Vec<i16>,
}

impl EdfSignal {
    /// Affine digital→physical scaling from the declared ranges.
    pub fn physical(&self, d: i16) -> f64 {
        let scale = (self.physical_max - self.physical_min)
            / (self.digital_max - self.digital_min) as f64;
        self.physical_min + (d as i64 - self.digital_min) as f64 * scale
    }

    pub fn physical_samples(&self) -> Vec<f64> {
        self.digital.iter().map(|&d| self.physical(d)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfRecording {
    pub patient_field: String,
    pub recording_field: String,
    pub start_date: String,
    pub start_time: String,
    pub record_count: usize,
    pub record_duration_s: f64,
    pub signals: Vec<EdfSignal>,
}

impl EdfRecording {
    pub fn duration_s(&self) -> f64 {
        self.record_count as f64 * self.record_duration_s
    }

    pub fn sampling_rate(&self, signal: usize) -> f64 {
        self.signals[signal].samples_per_record as f64 / self.record_duration_s
    }
}

fn ascii_field<'a>(bytes: &'a [u8], offset: &mut usize, len: usize) -> &'a [u8] {
    let field = &bytes[*offset..*offset + len];
    *offset += len;
    field
}

fn trimmed(field: &[u8]) -> String {
    String::from_utf8_lossy(field).trim().to_string()
}

fn parse_int(field: &[u8], name: &'static str) -> Result<i64, EdfError> {
    let text = trimmed(field);
    text.parse().map_err(|_| EdfError::BadNumericField {
        field: name,
        value: text,
    })
}

fn parse_float(field: &[u8], name: &'static str) -> Result<f64, EdfError> {
    let text = trimmed(field);
    text.parse().map_err(|_| EdfError::BadNumericField {
        field: name,
        value: text,
    })
}

pub fn parse_edf(bytes: &[u8]) -> Result<EdfRecording, EdfError> {
    if bytes.len() < HEADER_LEN {
        return Err(EdfError::Truncated {
            context: "fixed header",
            needed: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let mut at = 0usize;
    let version = ascii_field(bytes, &mut at, 8);
    if version != b"0       " {
        return Err(EdfError::BadMagic(String::from_utf8_lossy(version).into_owned()));
    }
    let patient_field = trimmed(ascii_field(bytes, &mut at, 80));
    let recording_field = trimmed(ascii_field(bytes, &mut at, 80));
    let start_date = trimmed(ascii_field(bytes, &mut at, 8));
    let start_time = trimmed(ascii_field(bytes, &mut at, 8));
    let header_bytes = parse_int(ascii_field(bytes, &mut at, 8), "header byte count")?;
    at += 44; // reserved
    let record_count = parse_int(ascii_field(bytes, &mut at, 8), "number of data records")?;
    let record_duration_s = parse_float(ascii_field(bytes, &mut at, 8), "record duration")?;
    let signal_count = parse_int(ascii_field(bytes, &mut at, 4), "signal count")?;
    debug_assert_eq!(at, HEADER_LEN);

    if signal_count <= 0 {
        return Err(EdfError::InvalidRange {
            field: "signal count",
            message: format!("must be positive, got {signal_count}"),
        });
    }
    let ns = signal_count as usize;
    if record_count < 0 {
        return Err(EdfError::InvalidRange {
            field: "number of data records",
            message: format!("must be nonnegative, got {record_count}"),
        });
    }
    if record_duration_s <= 0.0 {
        return Err(EdfError::InvalidRange {
            field: "record duration",
            message: format!("must be positive, got {record_duration_s}"),
        });
    }
    let expected_header = HEADER_LEN + SIGNAL_HEADER_LEN * ns;
    if header_bytes != expected_header as i64 {
        return Err(EdfError::InvalidRange {
            field: "header byte count",
            message: format!("declared {header_bytes}, layout requires {expected_header}"),
        });
    }
    if bytes.len() < expected_header {
        return Err(EdfError::Truncated {
            context: "signal headers",
            needed: expected_header,
            got: bytes.len(),
        });
    }

    // Per-signal arrays: each field stored for all signals consecutively.
    let labels: Vec<String> = (0..ns)
        .map(|_| trimmed(ascii_field(bytes, &mut at, 16)))
        .collect();
    let transducers: Vec<String> = (0..ns)
        .map(|_| trimmed(ascii_field(bytes, &mut at, 80)))
        .collect();
    let dimensions: Vec<String> = (0..ns)
        .map(|_| trimmed(ascii_field(bytes, &mut at, 8)))
        .collect();
    let phys_min: Vec<f64> = (0..ns)
        .map(|_| parse_float(ascii_field(bytes, &mut at, 8), "physical minimum"))
        .collect::<Result<_, _>>()?;
    let phys_max: Vec<f64> = (0..ns)
        .map(|_| parse_float(ascii_field(bytes, &mut at, 8), "physical maximum"))
        .collect::<Result<_, _>>()?;
    let dig_min: Vec<i64> = (0..ns)
        .map(|_| parse_int(ascii_field(bytes, &mut at, 8), "digital minimum"))
        .collect::<Result<_, _>>()?;
    let dig_max: Vec<i64> = (0..ns)
        .map(|_| parse_int(ascii_field(bytes, &mut at, 8), "digital maximum"))
        .collect::<Result<_, _>>()?;
    let prefiltering: Vec<String> = (0..ns)
        .map(|_| trimmed(ascii_field(bytes, &mut at, 80)))
        .collect();
    let samples_per_record: Vec<i64> = (0..ns)
        .map(|_| parse_int(ascii_field(bytes, &mut at, 8), "samples per record"))
        .collect::<Result<_, _>>()?;
    at += 32 * ns; // reserved
    debug_assert_eq!(at, expected_header);

    for i in 0..ns {
        if dig_max[i] <= dig_min[i] {
            return Err(EdfError::InvalidRange {
                field: "digital range",
                message: format!(
                    "signal {i} ({}): digital max {} must exceed min {}",
                    labels[i], dig_max[i], dig_min[i]
                ),
            });
        }
        if phys_max[i] == phys_min[i] {
            return Err(EdfError::InvalidRange {
                field: "physical range",
                message: format!("signal {i} ({}): physical max equals min", labels[i]),
            });
        }
        if samples_per_record[i] <= 0 {
            return Err(EdfError::InvalidRange {
                field: "samples per record",
                message: format!("signal {i} ({}): got {}", labels[i], samples_per_record[i]),
            });
        }
    }

    let record_samples: usize = samples_per_record.iter().map(|&s| s as usize).sum();
    let record_bytes = record_samples * 2;
    let expected_total = expected_header + record_count as usize * record_bytes;
    if bytes.len() != expected_total {
        return Err(EdfError::LengthMismatch {
            expected: expected_total,
            got: bytes.len(),
            records: record_count as usize,
            record_bytes,
        });
    }

    let mut signals: Vec<EdfSignal> = (0..ns)
        .map(|i| EdfSignal {
            label: labels[i].clone(),
            transducer: transducers[i].clone(),
            physical_dimension: dimensions[i].clone(),
            physical_min: phys_min[i],
            physical_max: phys_max[i],
            digital_min: dig_min[i],
            digital_max: dig_max[i],
            prefiltering: prefiltering[i].clone(),
            samples_per_record: samples_per_record[i] as usize,
            digital: Vec::with_capacity(record_count as usize * samples_per_record[i] as usize),
        })
        .collect();

    for _ in 0..record_count {
        for sig in signals.iter_mut() {
            for _ in 0..sig.samples_per_record {
                let lo = bytes[at];
                let hi = bytes[at + 1];
                at += 2;
                sig.digital.push(i16::from_le_bytes([lo, hi]));
            }
        }
    }

    Ok(EdfRecording {
        patient_field,
        recording_field,
        start_date,
        start_time,
        record_count: record_count as usize,
        record_duration_s,
        signals,
    })
}

fn push_ascii(out: &mut Vec<u8>, text: &str, width: usize) {
    let mut bytes = text.as_bytes().to_vec();
    bytes.truncate(width);
    bytes.resize(width, b' ');
    out.extend_from_slice(&bytes);
}

/// Format a float into EDF's 8-char numeric fields, preferring the shortest
/// exact decimal that fits.
fn format_number(value: f64) -> String {
    if value == value.trunc() && value.abs() < 1e7 {
        return format!("{}", value as i64);
    }
    let mut text = format!("{value}");
    if text.len() > 8 {
        text = format!("{value:.6}");
        while text.len() > 8 && text.contains('.') {
            text.pop();
        }
    }
    text
}

/// Serialize a recording back to EDF bytes. `parse_edf(write_edf(r)) == r`
/// for any recording whose string fields fit their columns and whose
/// numeric fields survive 8-character decimal formatting.
pub fn write_edf(rec: &EdfRecording) -> Vec<u8> {
    let ns = rec.signals.len();
    let mut out = Vec::with_capacity(HEADER_LEN + SIGNAL_HEADER_LEN * ns);
    push_ascii(&mut out, "0", 8);
    push_ascii(&mut out, &rec.patient_field, 80);
    push_ascii(&mut out, &rec.recording_field, 80);
    push_ascii(&mut out, &rec.start_date, 8);
    push_ascii(&mut out, &rec.start_time, 8);
    push_ascii(
        &mut out,
        &format!("{}", HEADER_LEN + SIGNAL_HEADER_LEN * ns),
        8,
    );
    push_ascii(&mut out, "", 44);
    push_ascii(&mut out, &format!("{}", rec.record_count), 8);
    push_ascii(&mut out, &format_number(rec.record_duration_s), 8);
    push_ascii(&mut out, &format!("{ns}"), 4);

    for s in &rec.signals {
        push_ascii(&mut out, &s.label, 16);
    }
    for s in &rec.signals {
        push_ascii(&mut out, &s.transducer, 80);
    }
    for s in &rec.signals {
        push_ascii(&mut out, &s.physical_dimension, 8);
    }
    for s in &rec.signals {
        push_ascii(&mut out, &format_number(s.physical_min), 8);
    }
    for s in &rec.signals {
        push_ascii(&mut out, &format_number(s.physical_max), 8);
    }
    for s in &rec.signals {
        push_ascii(&mut out, &format!("{}", s.digital_min), 8);
    }
    for s in &rec.signals {
        push_ascii(&mut out, &format!("{}", s.digital_max), 8);
    }
    for s in &rec.signals {
        push_ascii(&mut out, &s.prefiltering, 80);
    }
    for s in &rec.signals {
        push_ascii(&mut out, &format!("{}", s.samples_per_record), 8);
    }
    for _ in &rec.signals {
        push_ascii(&mut out, "", 32);
    }

    for record in 0..rec.record_count {
        for s in &rec.signals {
            let start = record * s.samples_per_record;
            for &d in &s.digital[start..start + s.samples_per_record] {
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
    }
    out
}
