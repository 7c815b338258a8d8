//! Signal conditioning: power-line notch filtering, short-time Fourier
//! magnitudes, and assembly into normalized square spectrogram images.

pub mod notch;
pub mod spectrogram;
pub mod stft;

use crate::ingest::SegmentError;
use crate::wire::WireError;
use thiserror::Error;

pub use notch::{design_notch, filter_signal, BiquadSection, IirFilter, HALF_BAND_HZ};
pub use spectrogram::{
    assemble_spectrogram, export_png, load_spectrogram, read_spectrogram, resize_bilinear,
    save_spectrogram, write_spectrogram, Spectrogram, IMAGE_CHANNELS, IMAGE_SIZE,
};
pub use stft::{stft_magnitude, DEFAULT_WINDOW_SECONDS};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("line frequency {line_freq_hz} Hz does not fit below Nyquist {nyquist} Hz with the stop band")]
    NyquistViolation { line_freq_hz: f64, nyquist: f64 },
    #[error("filter designed for {filter_hz} Hz applied to a {segment_hz} Hz segment")]
    RateMismatch { filter_hz: f64, segment_hz: f64 },
    #[error("segment of {samples} samples is shorter than one {window}-sample window")]
    SegmentTooShort { samples: usize, window: usize },
    #[error("shape mismatch in {context}: {message}")]
    ShapeMismatch { context: &'static str, message: String },
    #[error("bad argument in {context}: {message}")]
    BadArgument { context: &'static str, message: String },
    #[error("bad magic {0:?}, expected \"PFSP\"")]
    BadMagic(Vec<u8>),
    #[error("unsupported spectrogram version {0} (reader supports 1)")]
    Version(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error("preprocess io: {0}")]
    Io(#[from] std::io::Error),
}

/// Whole-segment conveyor: notch every channel, take per-channel STFT
/// magnitudes, assemble one spectrogram image.
pub fn segment_to_spectrogram(
    segment: &crate::ingest::SignalSegment,
    filter: &IirFilter,
    window_seconds: f64,
    image_size: usize,
) -> Result<Spectrogram, PreprocessError> {
    let filtered = filter_signal(segment, filter)?;
    let mags: Vec<Vec<Vec<f64>>> = (0..filtered.channels)
        .map(|c| stft_magnitude(filtered.channel(c), filtered.sampling_rate_hz, window_seconds))
        .collect::<Result<_, _>>()?;
    assemble_spectrogram(
        &mags,
        image_size,
        segment.label,
        segment.provenance,
        &segment.segment_id,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SignalSegment;
    use crate::types::{Label, Provenance};

    #[test]
    fn full_conveyor_produces_a_normalized_image() {
        let rate = 64.0;
        let n = (rate * 600.0) as usize;
        let samples: Vec<f32> = (0..2)
            .flat_map(|c| {
                (0..n).map(move |i| {
                    let t = i as f64 / rate;
                    ((2.0 * std::f64::consts::PI * (6.0 + c as f64) * t).sin()
                        + 0.3 * (2.0 * std::f64::consts::PI * 16.0 * t).sin())
                        as f32
                })
            })
            .collect();
        let seg = SignalSegment::new(
            "p", "s0", 2, rate, 0.0, 600.0,
            Label::Preictal, Provenance::Real, samples,
        )
        .unwrap();
        let filter = design_notch(rate, 16.0).unwrap();
        let spec = segment_to_spectrogram(&seg, &filter, 60.0, 32).unwrap();
        assert_eq!(spec.size(), 32);
        assert_eq!(spec.label, Label::Preictal);
        assert_eq!(spec.source_id, "s0");
        assert!(spec.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        // Determinism end to end.
        let again = segment_to_spectrogram(&seg, &filter, 60.0, 32).unwrap();
        assert_eq!(spec, again);
    }
}
