//! Timeline labeling policy: which windows of a recording become preictal or
//! interictal segments, which patients are eligible, and the manifest that
//! ties the segment files together.

use super::annotations::{merge_leading_seizures, AnnotationError, SeizureAnnotation};
use super::edf::EdfRecording;
use super::segment::{save_segment, SegmentError, SignalSegment};
use crate::types::{Label, Provenance};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Slack for float comparisons on timeline arithmetic. Window positions are
/// products of integral second counts, so this only matters for exotic inputs.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LabelPolicy {
    /// Gap between the end of a positive window and the onset it predicts.
    pub sph_s: f64,
    /// How far before (onset − SPH) positive windows may start.
    pub preictal_horizon_s: f64,
    /// Length of every emitted segment.
    pub segment_len_s: f64,
    /// Negative windows must be at least this far from any seizure.
    pub interictal_margin_s: f64,
    /// Minimum merged leading seizures for a patient to be eligible.
    pub min_leading_seizures: usize,
    /// Minimum total seizure-free region time (before tiling) per patient.
    pub min_interictal_s: f64,
    /// More raw onsets than this inside any rolling 24 h window excludes the patient.
    pub max_seizures_per_day: usize,
}

impl Default for LabelPolicy {
    fn default() -> Self {
        LabelPolicy {
            sph_s: 600.0,
            preictal_horizon_s: 3600.0,
            segment_len_s: 600.0,
            interictal_margin_s: 4.0 * 3600.0,
            min_leading_seizures: 3,
            min_interictal_s: 3.0 * 3600.0,
            max_seizures_per_day: 10,
        }
    }
}

/// A window the policy wants cut from a recording, before samples are touched.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedWindow {
    pub start_s: f64,
    pub label: Label,
    /// Onset of the merged seizure a preictal window points at.
    pub linked_onset_s: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SegmentPlan {
    pub windows: Vec<PlannedWindow>,
    /// Total seizure-free region length before tiling; eligibility counts this,
    /// not the (floor-quantized) tiled coverage.
    pub interictal_region_s: f64,
}

/// Pure timeline math: given a recording's duration and its merged seizures,
/// decide every window to cut. Preictal windows tile the horizon ending at
/// (onset − SPH), anchored at that end so the window nearest the seizure is
/// always flush with it; tiles that would cross the recording start are
/// dropped, as are tiles overlapping any seizure. Interictal windows tile
/// seizure-free regions from the region start.
pub fn plan_segments(
    duration_s: f64,
    merged: &[SeizureAnnotation],
    policy: &LabelPolicy,
) -> SegmentPlan {
    let len = policy.segment_len_s;
    let mut windows = Vec::new();

    for seizure in merged {
        let region_end = seizure.onset_s - policy.sph_s;
        let region_start = (region_end - policy.preictal_horizon_s).max(0.0);
        let mut tiles = Vec::new();
        let mut k = 0usize;
        loop {
            let end = region_end - k as f64 * len;
            let start = region_end - (k + 1) as f64 * len;
            if start < region_start - TIME_EPS || start < -TIME_EPS {
                break;
            }
            let clear = merged
                .iter()
                .all(|s| !(start < s.end_s - TIME_EPS && end > s.onset_s + TIME_EPS));
            if clear && end <= duration_s + TIME_EPS {
                tiles.push(PlannedWindow {
                    start_s: start,
                    label: Label::Preictal,
                    linked_onset_s: Some(seizure.onset_s),
                });
            }
            k += 1;
        }
        tiles.reverse();
        windows.extend(tiles);
    }

    // Seizure-free regions: [0, duration] minus the union of padded seizures.
    let mut blocked: Vec<(f64, f64)> = merged
        .iter()
        .map(|s| {
            (
                (s.onset_s - policy.interictal_margin_s).max(0.0),
                (s.end_s + policy.interictal_margin_s).min(duration_s),
            )
        })
        .collect();
    blocked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut free = Vec::new();
    let mut cursor = 0.0;
    for (bs, be) in blocked {
        if bs > cursor + TIME_EPS {
            free.push((cursor, bs));
        }
        cursor = cursor.max(be);
    }
    if duration_s > cursor + TIME_EPS {
        free.push((cursor, duration_s));
    }

    let mut interictal_region_s = 0.0;
    for (rs, re) in free {
        interictal_region_s += re - rs;
        let mut k = 0usize;
        loop {
            let start = rs + k as f64 * len;
            let end = start + len;
            if end > re + TIME_EPS {
                break;
            }
            windows.push(PlannedWindow {
                start_s: start,
                label: Label::Interictal,
                linked_onset_s: None,
            });
            k += 1;
        }
    }

    SegmentPlan { windows, interictal_region_s }
}

/// Why a patient was left out of the dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum ExclusionReason {
    TooFewLeadingSeizures { found: usize, required: usize },
    InsufficientInterictal { hours_found: f64, hours_required: f64 },
    TooManySeizuresPerDay { onsets_in_window: usize, window_start_s: f64 },
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionReason::TooFewLeadingSeizures { found, required } => {
                write!(f, "{found} leading seizures, need at least {required}")
            }
            ExclusionReason::InsufficientInterictal { hours_found, hours_required } => {
                write!(
                    f,
                    "{hours_found:.2} h of seizure-free time, need at least {hours_required:.2} h"
                )
            }
            ExclusionReason::TooManySeizuresPerDay { onsets_in_window, window_start_s } => {
                write!(
                    f,
                    "{onsets_in_window} onsets within 24 h starting at {window_start_s} s"
                )
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no recordings supplied")]
    EmptyInput,
    #[error("no eligible patients:{}", .0.iter().map(|(p, r)| format!("\n  {p}: {r}")).collect::<String>())]
    NoEligiblePatients(Vec<(String, ExclusionReason)>),
    #[error("patient {patient}: recording has {got} channels, dataset has {expected}")]
    MixedChannelCounts { patient: String, expected: usize, got: usize },
    #[error("patient {patient}: signals disagree on samples per record ({a} vs {b})")]
    MixedSamplingRates { patient: String, a: usize, b: usize },
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest line {line}: {message}")]
    ManifestParse { line: usize, message: String },
    #[error("manifest entry {path}: {message}")]
    ManifestValidate { path: String, message: String },
}

/// One continuous recording plus its seizure annotations (raw, sorted).
#[derive(Debug)]
pub struct RecordingInput {
    pub patient_id: String,
    pub recording: EdfRecording,
    pub annotations: Vec<SeizureAnnotation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// File name relative to the manifest's directory.
    pub path: String,
    pub patient_id: String,
    pub label: Label,
    pub provenance: Provenance,
    pub linked_onset_s: Option<f64>,
    pub segment_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub channels: usize,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn patients(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.patient_id) {
                out.push(e.patient_id.clone());
            }
        }
        out
    }

    /// Every referenced file must exist, parse, and match the declared
    /// channel count.
    pub fn validate(&self, base: &Path) -> Result<(), DatasetError> {
        for e in &self.entries {
            let seg = super::segment::load_segment(&base.join(&e.path)).map_err(|err| {
                DatasetError::ManifestValidate {
                    path: e.path.clone(),
                    message: err.to_string(),
                }
            })?;
            if seg.channels != self.channels {
                return Err(DatasetError::ManifestValidate {
                    path: e.path.clone(),
                    message: format!(
                        "segment has {} channels, manifest declares {}",
                        seg.channels, self.channels
                    ),
                });
            }
        }
        Ok(())
    }
}

pub fn format_manifest(manifest: &DatasetManifest) -> String {
    let mut out = format!("dataset\t{}\tchannels\t{}\n", manifest.name, manifest.channels);
    for e in &manifest.entries {
        let onset = match e.linked_onset_s {
            Some(t) => t.to_string(),
            None => "-".into(),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            e.path, e.patient_id, e.label, e.provenance, onset, e.segment_id
        ));
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest, DatasetError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DatasetError::ManifestParse {
        line: 1,
        message: "empty manifest".into(),
    })?;
    let head: Vec<&str> = header.split('\t').collect();
    if head.len() != 4 || head[0] != "dataset" || head[2] != "channels" {
        return Err(DatasetError::ManifestParse {
            line: 1,
            message: format!("expected 'dataset\\t<name>\\tchannels\\t<n>', got {header:?}"),
        });
    }
    let channels: usize = head[3].parse().map_err(|_| DatasetError::ManifestParse {
        line: 1,
        message: format!("bad channel count {:?}", head[3]),
    })?;
    let mut entries = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(DatasetError::ManifestParse {
                line: lineno,
                message: format!("expected 6 tab-separated columns, got {}", cols.len()),
            });
        }
        let label = match cols[2] {
            "preictal" => Label::Preictal,
            "interictal" => Label::Interictal,
            other => {
                return Err(DatasetError::ManifestParse {
                    line: lineno,
                    message: format!("unknown label {other:?}"),
                })
            }
        };
        let provenance = match cols[3] {
            "real" => Provenance::Real,
            "synthetic" => Provenance::Synthetic,
            other => {
                return Err(DatasetError::ManifestParse {
                    line: lineno,
                    message: format!("unknown provenance {other:?}"),
                })
            }
        };
        let linked_onset_s = if cols[4] == "-" {
            None
        } else {
            Some(cols[4].parse().map_err(|_| DatasetError::ManifestParse {
                line: lineno,
                message: format!("bad onset {:?}", cols[4]),
            })?)
        };
        entries.push(ManifestEntry {
            path: cols[0].into(),
            patient_id: cols[1].into(),
            label,
            provenance,
            linked_onset_s,
            segment_id: cols[5].into(),
        });
    }
    Ok(DatasetManifest { name: head[1].into(), channels, entries })
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), DatasetError> {
    Ok(std::fs::write(path, format_manifest(manifest))?)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

struct PatientEligibility {
    leading: usize,
    interictal_s: f64,
    day_violation: Option<(usize, f64)>,
}

fn check_patient(
    inputs: &[&RecordingInput],
    policy: &LabelPolicy,
) -> Result<PatientEligibility, DatasetError> {
    let mut leading = 0usize;
    let mut interictal_s = 0.0;
    let mut day_violation = None;
    for input in inputs {
        let merged = merge_leading_seizures(&input.annotations)?;
        leading += merged.len();
        let plan = plan_segments(input.recording.duration_s(), &merged, policy);
        interictal_s += plan.interictal_region_s;
        // Raw onsets, not merged: the cap is on seizure events as recorded.
        let onsets: Vec<f64> = input.annotations.iter().map(|a| a.onset_s).collect();
        for i in 0..onsets.len().saturating_sub(policy.max_seizures_per_day) {
            if onsets[i + policy.max_seizures_per_day] - onsets[i] <= 86_400.0 {
                day_violation = Some((policy.max_seizures_per_day + 1, onsets[i]));
            }
        }
    }
    Ok(PatientEligibility { leading, interictal_s, day_violation })
}

/// Cut every recording into labeled segment files under `out_dir` and return
/// the manifest describing them. Patients failing any eligibility rule are
/// dropped; if nobody is left the error lists each patient's reason.
pub fn build_dataset(
    inputs: &[RecordingInput],
    policy: &LabelPolicy,
    dataset_name: &str,
    out_dir: &Path,
) -> Result<DatasetManifest, DatasetError> {
    if inputs.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let mut patients: Vec<String> = Vec::new();
    for input in inputs {
        if !patients.contains(&input.patient_id) {
            patients.push(input.patient_id.clone());
        }
    }

    let mut eligible = Vec::new();
    let mut exclusions = Vec::new();
    for patient in &patients {
        let mine: Vec<&RecordingInput> =
            inputs.iter().filter(|i| &i.patient_id == patient).collect();
        let check = check_patient(&mine, policy)?;
        if let Some((count, start)) = check.day_violation {
            exclusions.push((
                patient.clone(),
                ExclusionReason::TooManySeizuresPerDay {
                    onsets_in_window: count,
                    window_start_s: start,
                },
            ));
        } else if check.leading < policy.min_leading_seizures {
            exclusions.push((
                patient.clone(),
                ExclusionReason::TooFewLeadingSeizures {
                    found: check.leading,
                    required: policy.min_leading_seizures,
                },
            ));
        } else if check.interictal_s < policy.min_interictal_s {
            exclusions.push((
                patient.clone(),
                ExclusionReason::InsufficientInterictal {
                    hours_found: check.interictal_s / 3600.0,
                    hours_required: policy.min_interictal_s / 3600.0,
                },
            ));
        } else {
            eligible.push(patient.clone());
        }
    }
    if eligible.is_empty() {
        return Err(DatasetError::NoEligiblePatients(exclusions));
    }

    std::fs::create_dir_all(out_dir)?;
    let mut channels: Option<usize> = None;
    let mut entries = Vec::new();
    for patient in &eligible {
        let mine: Vec<(usize, &RecordingInput)> = inputs
            .iter()
            .enumerate()
            .filter(|(_, i)| &i.patient_id == patient)
            .collect();
        for (ri, input) in mine {
            let rec = &input.recording;
            let ch = rec.signals.len();
            match channels {
                None => channels = Some(ch),
                Some(expected) if expected != ch => {
                    return Err(DatasetError::MixedChannelCounts {
                        patient: patient.clone(),
                        expected,
                        got: ch,
                    })
                }
                _ => {}
            }
            let spr = rec.signals[0].samples_per_record;
            if let Some(bad) = rec.signals.iter().find(|s| s.samples_per_record != spr) {
                return Err(DatasetError::MixedSamplingRates {
                    patient: patient.clone(),
                    a: spr,
                    b: bad.samples_per_record,
                });
            }
            let rate = rec.sampling_rate(0);
            let physical: Vec<Vec<f64>> =
                rec.signals.iter().map(|s| s.physical_samples()).collect();

            let merged = merge_leading_seizures(&input.annotations)?;
            let plan = plan_segments(rec.duration_s(), &merged, policy);
            let n = (policy.segment_len_s * rate).round() as usize;
            for (si, window) in plan.windows.iter().enumerate() {
                let start_idx = (window.start_s * rate).round() as usize;
                let mut samples = Vec::with_capacity(ch * n);
                for channel in &physical {
                    samples.extend(channel[start_idx..start_idx + n].iter().map(|&v| v as f32));
                }
                let segment_id = format!("{patient}-r{ri:02}-s{si:04}");
                let segment = SignalSegment::new(
                    patient,
                    &segment_id,
                    ch,
                    rate,
                    window.start_s,
                    policy.segment_len_s,
                    window.label,
                    Provenance::Real,
                    samples,
                )?;
                let file = format!("{segment_id}.pfsg");
                save_segment(&segment, &out_dir.join(&file))?;
                entries.push(ManifestEntry {
                    path: file,
                    patient_id: patient.clone(),
                    label: window.label,
                    provenance: Provenance::Real,
                    linked_onset_s: window.linked_onset_s,
                    segment_id,
                });
            }
        }
    }
    Ok(DatasetManifest {
        name: dataset_name.into(),
        channels: channels.unwrap_or(0),
        entries,
    })
}
