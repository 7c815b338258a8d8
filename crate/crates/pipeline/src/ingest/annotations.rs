//! Seizure annotations and leading-seizure merging.
//!
//! EDF proper carries no event channel, so annotations arrive as a sidecar
//! text file: one `onset_s,end_s` pair per line, `#` comments allowed.

use thiserror::Error;

/// Gap below which consecutive seizures count as one event: 30 minutes.
pub const MERGE_GAP_S: f64 = 1800.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeizureAnnotation {
    pub onset_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("line {line}: expected 'onset_s,end_s', got {content:?}")]
    Malformed { line: usize, content: String },
    #[error("line {line}: end {end_s} must be after onset {onset_s}")]
    EmptyInterval {
        line: usize,
        onset_s: f64,
        end_s: f64,
    },
    #[error("annotations out of order at index {index}: onset {onset_s} precedes previous {previous_s}")]
    Unsorted {
        index: usize,
        onset_s: f64,
        previous_s: f64,
    },
}

/// Parse a sidecar annotation file. Returned annotations are validated as
/// sorted by onset.
pub fn parse_annotations(text: &str) -> Result<Vec<SeizureAnnotation>, AnnotationError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (onset_text, end_text) = line.split_once(',').ok_or(AnnotationError::Malformed {
            line: i + 1,
            content: line.to_string(),
        })?;
        let parse = |t: &str| -> Result<f64, AnnotationError> {
            t.trim().parse().map_err(|_| AnnotationError::Malformed {
                line: i + 1,
                content: line.to_string(),
            })
        };
        let onset_s = parse(onset_text)?;
        let end_s = parse(end_text)?;
        if end_s <= onset_s {
            return Err(AnnotationError::EmptyInterval {
                line: i + 1,
                onset_s,
                end_s,
            });
        }
        out.push(SeizureAnnotation { onset_s, end_s });
    }
    ensure_sorted(&out)?;
    Ok(out)
}

pub fn format_annotations(annotations: &[SeizureAnnotation]) -> String {
    let mut out = String::from("# onset_s,end_s\n");
    for a in annotations {
        out.push_str(&format!("{},{}\n", a.onset_s, a.end_s));
    }
    out
}

fn ensure_sorted(annotations: &[SeizureAnnotation]) -> Result<(), AnnotationError> {
    for (i, pair) in annotations.windows(2).enumerate() {
        if pair[1].onset_s < pair[0].onset_s {
            return Err(AnnotationError::Unsorted {
                index: i + 1,
                onset_s: pair[1].onset_s,
                previous_s: pair[0].onset_s,
            });
        }
    }
    Ok(())
}

/// Collapse seizures separated by less than 30 minutes into single events:
/// a seizure that follows another too closely is not independently
/// predictable, so only the first onset of each cluster is a prediction
/// target. The merged event keeps the cluster's first onset and last end.
/// Gaps of exactly 30 minutes do NOT merge.
pub fn merge_leading_seizures(
    annotations: &[SeizureAnnotation],
) -> Result<Vec<SeizureAnnotation>, AnnotationError> {
    ensure_sorted(annotations)?;
    let mut merged: Vec<SeizureAnnotation> = Vec::new();
    for &a in annotations {
        match merged.last_mut() {
            Some(last) if a.onset_s - last.end_s < MERGE_GAP_S => {
                last.end_s = last.end_s.max(a.end_s);
            }
            _ => merged.push(a),
        }
    }
    Ok(merged)
}
