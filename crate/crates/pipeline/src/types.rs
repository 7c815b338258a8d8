//! Shared label and provenance vocabulary.

use std::fmt;

/// Segment class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Interictal,
    Preictal,
}

impl Label {
    pub fn code(self) -> u8 {
        match self {
            Label::Interictal => 0,
            Label::Preictal => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Label> {
        match code {
            0 => Some(Label::Interictal),
            1 => Some(Label::Preictal),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Interictal => write!(f, "interictal"),
            Label::Preictal => write!(f, "preictal"),
        }
    }
}

/// One classifier output attached to its segment's place on the timeline.
/// `end_time_s` is the segment's end, measured from the recording start —
/// the moment a deployed predictor could first act on the segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub patient_id: String,
    pub segment_id: String,
    pub end_time_s: f64,
    pub label: Label,
    pub prob: f64,
}

/// Whether a sample came from recorded signal or from the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Real,
    Synthetic,
}

impl Provenance {
    pub fn code(self) -> u8 {
        match self {
            Provenance::Real => 0,
            Provenance::Synthetic => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Provenance> {
        match code {
            0 => Some(Provenance::Real),
            1 => Some(Provenance::Synthetic),
            _ => None,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Real => write!(f, "real"),
            Provenance::Synthetic => write!(f, "synthetic"),
        }
    }
}
