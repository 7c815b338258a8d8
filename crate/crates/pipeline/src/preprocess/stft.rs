//! Short-time Fourier magnitudes: rectangular windows, no overlap.

use super::PreprocessError;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub const DEFAULT_WINDOW_SECONDS: f64 = 60.0;

/// Magnitude spectrogram of one channel: `frames × (window/2 + 1)` rows of
/// DFT magnitudes over consecutive non-overlapping rectangular windows.
/// Trailing samples that do not fill a window are dropped.
pub fn stft_magnitude(
    samples: &[f32],
    sample_rate_hz: f64,
    window_seconds: f64,
) -> Result<Vec<Vec<f64>>, PreprocessError> {
    if !(sample_rate_hz > 0.0 && window_seconds > 0.0) {
        return Err(PreprocessError::BadArgument {
            context: "stft",
            message: format!("rate {sample_rate_hz} Hz, window {window_seconds} s"),
        });
    }
    let window = (sample_rate_hz * window_seconds).round() as usize;
    if window == 0 || samples.len() < window {
        return Err(PreprocessError::SegmentTooShort {
            samples: samples.len(),
            window,
        });
    }
    let frames = samples.len() / window;
    let bins = window / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window);
    let mut out = Vec::with_capacity(frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); window];
    for f in 0..frames {
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(samples[f * window + i] as f64, 0.0);
        }
        fft.process(&mut buf);
        out.push(buf[..bins].iter().map(|c| c.norm()).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ten_minutes_at_400_hz_gives_ten_frames() {
        let samples = vec![0.25f32; 400 * 600];
        let m = stft_magnitude(&samples, 400.0, 60.0).unwrap();
        assert_eq!(m.len(), 10);
        assert_eq!(m[0].len(), 400 * 60 / 2 + 1);
    }

    #[test]
    fn constant_signal_has_all_energy_in_bin_zero() {
        let samples = vec![1.0f32; 256 * 60];
        let m = stft_magnitude(&samples, 256.0, 60.0).unwrap();
        let frame = &m[0];
        assert!((frame[0] - 256.0 * 60.0).abs() < 1e-6);
        let rest = frame[1..].iter().cloned().fold(0.0f64, f64::max);
        assert!(rest <= 1e-9 * frame[0]);
    }

    #[test]
    fn sine_at_a_bin_frequency_peaks_at_that_bin() {
        let rate = 128.0;
        let window = 128 * 60;
        // Bin k corresponds to k/60 Hz; pick k = 420 → 7 Hz.
        let k = 420usize;
        let freq = k as f64 / 60.0;
        let samples: Vec<f32> = (0..window)
            .map(|i| (2.0 * PI * freq * i as f64 / rate).sin() as f32)
            .collect();
        let m = stft_magnitude(&samples, rate, 60.0).unwrap();
        let frame = &m[0];
        // Closed form: |X_k| = N/2 for a unit sine exactly on bin k.
        assert!((frame[k] - window as f64 / 2.0).abs() < 1e-5 * window as f64);
        for (i, &v) in frame.iter().enumerate() {
            if i != k {
                assert!(v < frame[k] * 1e-6, "bin {i} holds {v}");
            }
        }
    }

    #[test]
    fn too_short_segment_is_an_error() {
        let samples = vec![0.0f32; 100];
        assert!(matches!(
            stft_magnitude(&samples, 256.0, 60.0),
            Err(PreprocessError::SegmentTooShort { .. })
        ));
    }

    #[test]
    fn rectangular_window_satisfies_parseval() {
        let window = 64 * 60;
        let samples: Vec<f32> = (0..window)
            .map(|i| ((i * 2654435761usize % 1000) as f32 / 500.0) - 1.0)
            .collect();
        let m = stft_magnitude(&samples, 64.0, 60.0).unwrap();
        let frame = &m[0];
        // Reconstruct the full-spectrum sum from the half spectrum: bins
        // 1..n/2−1 appear twice in the full DFT of a real signal.
        let mut spectral = frame[0].powi(2) + frame[window / 2].powi(2);
        for v in &frame[1..window / 2] {
            spectral += 2.0 * v.powi(2);
        }
        let time: f64 = samples.iter().map(|&v| (v as f64).powi(2)).sum();
        let expect = window as f64 * time;
        assert!(
            (spectral - expect).abs() <= 1e-6 * expect,
            "{spectral} vs {expect}"
        );
    }
}
