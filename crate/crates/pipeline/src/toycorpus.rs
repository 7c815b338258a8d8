//! Deterministic miniature corpora for desk-scale runs: a two-mode image
//! set for adversarial training, and a small EEG-like corpus with seizure
//! timelines that exercises the full ingest → preprocess → classify →
//! evaluate chain in minutes.

use crate::cesp::{CorpusItem, ProtocolCorpus};
use crate::ingest::{
    merge_leading_seizures, plan_segments, AnnotationError, EdfRecording, EdfSignal, LabelPolicy,
    RecordingInput, SegmentError, SeizureAnnotation, SignalSegment,
};
use crate::preprocess::{design_notch, segment_to_spectrogram, PreprocessError};
use crate::types::Provenance;
use pf_numcore::{Rng, Tensor};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use thiserror::Error;

pub const TOY_RATE_HZ: f64 = 64.0;
pub const TOY_CHANNELS: usize = 4;
/// Line frequency planted in every channel; the notch filter must remove it.
pub const TOY_LINE_HZ: f64 = 16.0;
pub const TOY_IMAGE_SIZE: usize = 32;
pub const TOY_STFT_WINDOW_S: f64 = 60.0;
pub const TOY_DURATION_S: f64 = 40_000.0;
pub const TOY_ONSETS_S: [f64; 3] = [4_800.0, 9_000.0, 13_200.0];
pub const TOY_SEIZURE_LEN_S: f64 = 60.0;

#[derive(Debug, Error)]
pub enum ToyError {
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

/// Images drawn from a two-mode distribution: a bright Gaussian blob in
/// the upper-left or the lower-right corner on a dark background, with a
/// jittered center. Values lie in [−1, 1], shape `[size, size, 3]`.
pub fn two_blob_images(count: usize, size: usize, seed: u64) -> Vec<Tensor<f32>> {
    let mut rng = Rng::new(seed);
    let sigma = size as f64 / 6.0;
    (0..count)
        .map(|_| {
            let corner = if rng.below(2) == 0 {
                (size as f64 / 4.0, size as f64 / 4.0)
            } else {
                (3.0 * size as f64 / 4.0, 3.0 * size as f64 / 4.0)
            };
            let cy = corner.0 + rng.normal() * 0.5;
            let cx = corner.1 + rng.normal() * 0.5;
            let mut data = Vec::with_capacity(size * size * 3);
            for y in 0..size {
                for x in 0..size {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    let v = (-d2 / (2.0 * sigma * sigma)).exp() * 2.0 - 1.0;
                    let v = v as f32;
                    data.extend_from_slice(&[v, v, v]);
                }
            }
            Tensor::from_vec(&[size, size, 3], data).expect("consistent dims")
        })
        .collect()
}

fn in_preictal_horizon(t: f64, policy: &LabelPolicy) -> bool {
    TOY_ONSETS_S.iter().any(|&onset| {
        let end = onset - policy.sph_s;
        t >= end - policy.preictal_horizon_s && t < end
    })
}

/// One patient's synthetic recording: four EEG channels at 64 Hz. All
/// channels carry a 16 Hz line tone; inside preictal horizons channels
/// 0–1 light up with a strong 6 Hz rhythm and boosted broadband power,
/// outside them channels 2–3 do. Three seizures sit at fixed onsets.
pub fn toy_recording(patient_id: &str, rng: &mut Rng) -> RecordingInput {
    let policy = LabelPolicy::default();
    let total = (TOY_DURATION_S * TOY_RATE_HZ) as usize;
    let spr = TOY_RATE_HZ as usize;
    let (pmin, pmax) = (-8.0f64, 8.0f64);
    let (dmin, dmax) = (-32_768i64, 32_767i64);
    let quantize = |v: f64| -> i16 {
        let clamped = v.clamp(pmin, pmax);
        let scaled =
            (clamped - pmin) / (pmax - pmin) * (dmax - dmin) as f64 + dmin as f64;
        scaled.round() as i16
    };

    let phases: Vec<f64> = (0..TOY_CHANNELS).map(|_| rng.uniform() * TAU).collect();
    let signals: Vec<EdfSignal> = (0..TOY_CHANNELS)
        .map(|c| {
            let mut digital = Vec::with_capacity(total);
            for i in 0..total {
                let t = i as f64 / TOY_RATE_HZ;
                let preictal = in_preictal_horizon(t, &policy);
                let active = if preictal { c < 2 } else { c >= 2 };
                let (amp, noise_sd) = if active { (1.0, 1.0) } else { (0.0, 0.15) };
                let v = amp * (TAU * 6.0 * t + phases[c]).sin()
                    + 0.4 * (TAU * TOY_LINE_HZ * t + phases[c]).sin()
                    + noise_sd * rng.normal();
                digital.push(quantize(v));
            }
            EdfSignal {
                label: format!("EEG C{c}"),
                transducer: "AgAgCl electrode".into(),
                physical_dimension: "uV".into(),
                physical_min: pmin,
                physical_max: pmax,
                digital_min: dmin,
                digital_max: dmax,
                prefiltering: String::new(),
                samples_per_record: spr,
                digital,
            }
        })
        .collect();

    RecordingInput {
        patient_id: patient_id.to_string(),
        recording: EdfRecording {
            patient_field: format!("X X X {patient_id}"),
            recording_field: "Startdate 01-JAN-2020".into(),
            start_date: "01.01.20".into(),
            start_time: "00.00.00".into(),
            record_count: TOY_DURATION_S as usize,
            record_duration_s: 1.0,
            signals,
        },
        annotations: TOY_ONSETS_S
            .iter()
            .map(|&onset| SeizureAnnotation { onset_s: onset, end_s: onset + TOY_SEIZURE_LEN_S })
            .collect(),
    }
}

/// Cut a recording into labeled segments and render each to a 32×32
/// spectrogram through the 16 Hz notch. Returns the items together with
/// the untiled interictal seconds the evaluator charges false alarms
/// against.
pub fn recording_to_items(
    input: &RecordingInput,
    provenance: Provenance,
) -> Result<(Vec<CorpusItem>, f64, Vec<f64>), ToyError> {
    let policy = LabelPolicy::default();
    let merged = merge_leading_seizures(&input.annotations)?;
    let plan = plan_segments(input.recording.duration_s(), &merged, &policy);
    let rate = input.recording.sampling_rate(0);
    let physical: Vec<Vec<f64>> =
        input.recording.signals.iter().map(|s| s.physical_samples()).collect();
    let notch = design_notch(rate, TOY_LINE_HZ)?;
    let n = (policy.segment_len_s * rate).round() as usize;

    let mut items = Vec::with_capacity(plan.windows.len());
    for (si, window) in plan.windows.iter().enumerate() {
        let start_idx = (window.start_s * rate).round() as usize;
        let mut samples = Vec::with_capacity(TOY_CHANNELS * n);
        for channel in &physical {
            samples.extend(channel[start_idx..start_idx + n].iter().map(|&v| v as f32));
        }
        let segment_id = format!("{}-s{si:04}", input.patient_id);
        let segment = SignalSegment::new(
            &input.patient_id,
            &segment_id,
            TOY_CHANNELS,
            rate,
            window.start_s,
            policy.segment_len_s,
            window.label,
            provenance,
            samples,
        )?;
        let spectrogram =
            segment_to_spectrogram(&segment, &notch, TOY_STFT_WINDOW_S, TOY_IMAGE_SIZE)?;
        items.push(CorpusItem {
            spectrogram,
            patient_id: input.patient_id.clone(),
            end_time_s: segment.end_time_s(),
        });
    }
    let onsets = merged.iter().map(|s| s.onset_s).collect();
    Ok((items, plan.interictal_region_s, onsets))
}

/// A two-patient protocol corpus. The `Synthetic` flavor redraws the same
/// timelines from the same generator under a different seed, standing in
/// for sieve-filtered generator output whose distribution matches the real
/// data.
pub fn toy_protocol_corpus(seed: u64, provenance: Provenance) -> Result<ProtocolCorpus, ToyError> {
    let tag = match provenance {
        Provenance::Real => "r",
        Provenance::Synthetic => "s",
    };
    let root = Rng::new(seed);
    let mut items = Vec::new();
    let mut onsets = BTreeMap::new();
    let mut interictal_hours = BTreeMap::new();
    for (p, name) in ["a", "b"].iter().enumerate() {
        let patient_id = format!("toy-{tag}-{name}");
        let input = toy_recording(&patient_id, &mut root.derive(p as u64 + 1));
        let (patient_items, interictal_s, patient_onsets) =
            recording_to_items(&input, provenance)?;
        items.extend(patient_items);
        onsets.insert(patient_id.clone(), patient_onsets);
        interictal_hours.insert(patient_id, interictal_s / 3600.0);
    }
    Ok(ProtocolCorpus { items, onsets, interictal_hours })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_blob_images_are_deterministic_and_bounded() {
        let a = two_blob_images(10, 8, 3);
        let b = two_blob_images(10, 8, 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        for img in &a {
            assert_eq!(img.shape(), &[8, 8, 3]);
            assert!(img.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        // Both modes appear over a larger draw.
        let many = two_blob_images(40, 8, 3);
        let upper_bright = many
            .iter()
            .filter(|img| img.data()[(2 * 8 + 2) * 3] > img.data()[(6 * 8 + 6) * 3])
            .count();
        assert!(upper_bright >= 10 && upper_bright <= 30, "{upper_bright} of 40 upper-mode");
    }

    #[test]
    fn toy_recording_matches_design() {
        let mut rng = Rng::new(5);
        let input = toy_recording("toy-r-a", &mut rng);
        assert_eq!(input.recording.signals.len(), TOY_CHANNELS);
        assert_eq!(input.recording.duration_s(), TOY_DURATION_S);
        assert_eq!(input.recording.sampling_rate(0), TOY_RATE_HZ);
        assert_eq!(input.annotations.len(), 3);
        // The quantization grid is fine enough to keep waveform error tiny.
        let s = &input.recording.signals[0];
        let step = (s.physical_max - s.physical_min)
            / (s.digital_max - s.digital_min) as f64;
        assert!(step < 5e-4, "quantization step {step}");
    }

    #[test]
    fn protocol_corpus_has_expected_composition() {
        let corpus = toy_protocol_corpus(11, Provenance::Real).unwrap();
        // Per patient: 16 preictal tiles (6 + 5 + 5) and 20 interictal.
        assert_eq!(corpus.items.len(), 72);
        for patient in ["toy-r-a", "toy-r-b"] {
            let mine: Vec<_> =
                corpus.items.iter().filter(|i| i.patient_id == patient).collect();
            let pre =
                mine.iter().filter(|i| i.spectrogram.label == Label::Preictal).count();
            let inter =
                mine.iter().filter(|i| i.spectrogram.label == Label::Interictal).count();
            assert_eq!((pre, inter), (16, 20), "{patient}");
            assert_eq!(corpus.onsets[patient], TOY_ONSETS_S.to_vec());
            let hours = corpus.interictal_hours[patient];
            assert!(hours > 3.0, "{hours} interictal hours");
        }
        for item in &corpus.items {
            assert_eq!(item.spectrogram.size(), TOY_IMAGE_SIZE);
            assert_eq!(item.spectrogram.provenance, Provenance::Real);
        }

        let synthetic = toy_protocol_corpus(11, Provenance::Synthetic).unwrap();
        assert!(synthetic.items.iter().all(|i| i.spectrogram.provenance == Provenance::Synthetic));
        assert!(synthetic.items[0].patient_id.starts_with("toy-s-"));
    }

    #[test]
    fn corpus_classes_are_visibly_separated() {
        let corpus = toy_protocol_corpus(13, Provenance::Real).unwrap();
        // Channels 0–1 occupy the top half of the stacked spectrogram.
        // Preictal items should be brighter there than below; interictal
        // the other way round.
        for item in &corpus.items {
            let s = item.spectrogram.size();
            let plane = item.spectrogram.plane(0);
            let top: f32 = plane[..s * s / 2].iter().sum();
            let bottom: f32 = plane[s * s / 2..].iter().sum();
            match item.spectrogram.label {
                Label::Preictal => assert!(
                    top > bottom,
                    "{}: top {top} vs bottom {bottom}",
                    item.spectrogram.source_id
                ),
                Label::Interictal => assert!(
                    bottom > top,
                    "{}: top {top} vs bottom {bottom}",
                    item.spectrogram.source_id
                ),
            }
        }
    }

    #[test]
    fn corpus_generation_is_deterministic() {
        let a = toy_protocol_corpus(29, Provenance::Real).unwrap();
        let b = toy_protocol_corpus(29, Provenance::Real).unwrap();
        assert_eq!(a.items.len(), b.items.len());
        for (x, y) in a.items.iter().zip(&b.items) {
            assert_eq!(x, y);
        }
        let c = toy_protocol_corpus(30, Provenance::Real).unwrap();
        assert_ne!(a.items[0].spectrogram.data(), c.items[0].spectrogram.data());
    }
}
