//! Power-line notch: 4th-order Butterworth band-stop (two biquads) designed
//! in the analog domain and mapped through the bilinear transform.
//!
//! The upper band edge is adjusted after frequency warping so that the
//! geometric band center lands exactly on the line frequency; the band-stop
//! transform then places its transmission zeros at ±j·ω₀, and the bilinear
//! map sends those to the unit circle exactly — the notch has (numerically)
//! unbounded depth at the line frequency and unity gain at DC.

use super::PreprocessError;
use crate::ingest::SignalSegment;
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

/// Half-width of the stop band in Hz (band edges at line_freq ± 2 Hz).
pub const HALF_BAND_HZ: f64 = 2.0;

/// One second-order section, normalized so a0 = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiquadSection {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadSection {
    /// Both poles strictly inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        self.a2 < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    pub fn poles(&self) -> (Complex64, Complex64) {
        let half = Complex64::new(-self.a1 / 2.0, 0.0);
        let disc = (half * half - Complex64::new(self.a2, 0.0)).sqrt();
        (half + disc, half - disc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    pub sections: Vec<BiquadSection>,
    pub sample_rate_hz: f64,
    pub stop_low_hz: f64,
    pub stop_high_hz: f64,
}

impl IirFilter {
    /// |H(e^{j2πf/fs})| for the whole cascade.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let mut h = Complex64::new(1.0, 0.0);
        for s in &self.sections {
            let num = Complex64::new(s.b0, 0.0) + z1 * s.b1 + z2 * s.b2;
            let den = Complex64::new(1.0, 0.0) + z1 * s.a1 + z2 * s.a2;
            h *= num / den;
        }
        h.norm()
    }

    pub fn gain_db_at(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude_at(freq_hz).log10()
    }

    /// Run the cascade over one channel (direct form II transposed,
    /// zero initial state).
    pub fn apply_f64(&self, samples: &[f64]) -> Vec<f64> {
        let mut data = samples.to_vec();
        for s in &self.sections {
            let (mut s1, mut s2) = (0.0f64, 0.0f64);
            for v in data.iter_mut() {
                let x = *v;
                let y = s.b0 * x + s1;
                s1 = s.b1 * x - s.a1 * y + s2;
                s2 = s.b2 * x - s.a2 * y;
                *v = y;
            }
        }
        data
    }

    pub fn apply(&self, samples: &[f32]) -> Vec<f32> {
        let data: Vec<f64> = samples.iter().map(|&v| v as f64).collect();
        self.apply_f64(&data).into_iter().map(|v| v as f32).collect()
    }
}

/// Map a normalized digital frequency (fraction of Nyquist) to the analog
/// frequency that the bilinear transform (with fs = 2) will warp back onto it.
fn prewarp(normalized: f64) -> f64 {
    4.0 * (PI * normalized / 2.0).tan()
}

fn conjugate_pairs(roots: &[Complex64]) -> Vec<(Complex64, Complex64)> {
    let upper: Vec<Complex64> = roots.iter().copied().filter(|r| r.im > 0.0).collect();
    let mut lower: Vec<Complex64> = roots.iter().copied().filter(|r| r.im <= 0.0).collect();
    assert_eq!(upper.len(), lower.len(), "roots must close under conjugation");
    let mut pairs = Vec::new();
    for u in upper {
        let want = u.conj();
        let (idx, _) = lower
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (**a - want).norm().total_cmp(&(**b - want).norm()))
            .expect("lower half nonempty");
        pairs.push((u, lower.remove(idx)));
    }
    pairs
}

pub fn design_notch(sample_rate_hz: f64, line_freq_hz: f64) -> Result<IirFilter, PreprocessError> {
    let nyquist = sample_rate_hz / 2.0;
    if !(line_freq_hz - HALF_BAND_HZ > 0.0 && line_freq_hz + HALF_BAND_HZ < nyquist) {
        return Err(PreprocessError::NyquistViolation { line_freq_hz, nyquist });
    }

    // Normalized band edges, pre-warped to analog frequencies. The upper
    // edge is then recomputed so the geometric center is exactly the warped
    // line frequency.
    let w1 = prewarp((line_freq_hz - HALF_BAND_HZ) / nyquist);
    let wo = prewarp(line_freq_hz / nyquist);
    let w2 = wo * wo / w1;
    let bw = w2 - w1;

    // Order-2 Butterworth low-pass prototype: conjugate poles on the unit
    // circle of the s-plane, no zeros, unit gain.
    let prototype = [
        Complex64::from_polar(1.0, 3.0 * PI / 4.0),
        Complex64::from_polar(1.0, 5.0 * PI / 4.0),
    ];

    // Low-pass → band-stop: each prototype pole p becomes the two roots of
    // q² − 2(bw/2)/p · q + ω₀² = 0; transmission zeros sit at ±j·ω₀.
    let mut analog_poles = Vec::with_capacity(4);
    for p in prototype {
        let p_hp = Complex64::new(bw / 2.0, 0.0) / p;
        let disc = (p_hp * p_hp - Complex64::new(wo * wo, 0.0)).sqrt();
        analog_poles.push(p_hp + disc);
        analog_poles.push(p_hp - disc);
    }
    let analog_zeros = [
        Complex64::new(0.0, wo),
        Complex64::new(0.0, -wo),
        Complex64::new(0.0, wo),
        Complex64::new(0.0, -wo),
    ];

    // Bilinear transform with fs = 2 (matching the normalized pre-warp).
    let fs2 = 4.0;
    let map = |s: Complex64| (Complex64::new(fs2, 0.0) + s) / (Complex64::new(fs2, 0.0) - s);
    let digital_zeros: Vec<Complex64> = analog_zeros.iter().map(|&z| map(z)).collect();
    let digital_poles: Vec<Complex64> = analog_poles.iter().map(|&p| map(p)).collect();
    let num: Complex64 = analog_zeros
        .iter()
        .map(|&z| Complex64::new(fs2, 0.0) - z)
        .product();
    let den: Complex64 = analog_poles
        .iter()
        .map(|&p| Complex64::new(fs2, 0.0) - p)
        .product();
    let gain = (num / den).re;

    let zero_pairs = conjugate_pairs(&digital_zeros);
    let pole_pairs = conjugate_pairs(&digital_poles);
    let mut sections = Vec::with_capacity(2);
    for (i, ((z1, z2), (p1, p2))) in zero_pairs.into_iter().zip(pole_pairs).enumerate() {
        let scale = if i == 0 { gain } else { 1.0 };
        sections.push(BiquadSection {
            b0: scale,
            b1: -scale * (z1 + z2).re,
            b2: scale * (z1 * z2).re,
            a1: -(p1 + p2).re,
            a2: (p1 * p2).re,
        });
    }

    let filter = IirFilter {
        sections,
        sample_rate_hz,
        stop_low_hz: line_freq_hz - HALF_BAND_HZ,
        stop_high_hz: line_freq_hz + HALF_BAND_HZ,
    };
    debug_assert!(filter.sections.iter().all(BiquadSection::is_stable));
    Ok(filter)
}

/// Notch every channel of a segment. The filter must have been designed for
/// the segment's sampling rate.
pub fn filter_signal(
    segment: &SignalSegment,
    filter: &IirFilter,
) -> Result<SignalSegment, PreprocessError> {
    if (segment.sampling_rate_hz - filter.sample_rate_hz).abs() > 1e-9 {
        return Err(PreprocessError::RateMismatch {
            filter_hz: filter.sample_rate_hz,
            segment_hz: segment.sampling_rate_hz,
        });
    }
    let mut samples = Vec::with_capacity(segment.samples().len());
    for c in 0..segment.channels {
        samples.extend(filter.apply(segment.channel(c)));
    }
    segment
        .with_samples(samples)
        .map_err(PreprocessError::Segment)
}
