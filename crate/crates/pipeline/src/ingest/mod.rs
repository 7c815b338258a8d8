//! Recording ingestion: EDF decoding, seizure annotations, the labeling
//! policy that cuts recordings into segments, and the segment/manifest
//! file formats.

pub mod annotations;
pub mod dataset;
pub mod edf;
pub mod segment;

pub use annotations::{
    format_annotations, merge_leading_seizures, parse_annotations, AnnotationError,
    SeizureAnnotation, MERGE_GAP_S,
};
pub use dataset::{
    build_dataset, format_manifest, load_manifest, parse_manifest, plan_segments, save_manifest,
    DatasetError, DatasetManifest, ExclusionReason, LabelPolicy, ManifestEntry, PlannedWindow,
    RecordingInput, SegmentPlan,
};
pub use edf::{parse_edf, write_edf, EdfError, EdfRecording, EdfSignal};
pub use segment::{
    load_segment, read_segment, save_segment, write_segment, SegmentError, SignalSegment,
};
