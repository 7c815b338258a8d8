//! Assembled spectrogram images and their on-disk format.
//!
//! Per-channel STFT magnitudes are stacked along the frequency axis
//! (channel 0 on top), compressed with log(1+m), bilinearly resized to a
//! square image, replicated to three identical image channels, and
//! min-max normalized to [−1, 1]. A degenerate image (max = min) maps to
//! a uniform −1.

use super::PreprocessError;
use crate::types::{Label, Provenance};
use crate::wire::{self, WireError};
use pf_numcore::Tensor;
use std::fs;
use std::path::Path;

/// Full-scale image edge: spectrograms are IMAGE_SIZE × IMAGE_SIZE × 3.
pub const IMAGE_SIZE: usize = 256;
pub const IMAGE_CHANNELS: usize = 3;

const MAGIC: &[u8; 4] = b"PFSP";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    size: usize,
    /// Row-major height × width × 3, values in [−1, 1].
    data: Vec<f32>,
    pub label: Label,
    pub provenance: Provenance,
    pub source_id: String,
}

impl Spectrogram {
    pub fn new(
        size: usize,
        data: Vec<f32>,
        label: Label,
        provenance: Provenance,
        source_id: &str,
    ) -> Result<Self, PreprocessError> {
        if size == 0 || data.len() != size * size * IMAGE_CHANNELS {
            return Err(PreprocessError::ShapeMismatch {
                context: "spectrogram",
                message: format!(
                    "expected {size}×{size}×{IMAGE_CHANNELS} = {} values, got {}",
                    size * size * IMAGE_CHANNELS,
                    data.len()
                ),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(PreprocessError::BadArgument {
                context: "spectrogram",
                message: format!("value {v} outside [-1, 1]"),
            });
        }
        Ok(Spectrogram { size, data, label, provenance, source_id: source_id.into() })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.size + x) * IMAGE_CHANNELS + c]
    }

    /// One image channel as a size×size plane.
    pub fn plane(&self, c: usize) -> Vec<f32> {
        (0..self.size * self.size)
            .map(|i| self.data[i * IMAGE_CHANNELS + c])
            .collect()
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(&[self.size, self.size, IMAGE_CHANNELS], self.data.clone())
            .expect("dimensions validated at construction")
    }

    /// Wrap model output as a spectrogram, clamping stray values into range
    /// (a tanh head can emit ±1 exactly; float error may poke past it).
    pub fn from_tensor(
        tensor: &Tensor<f32>,
        label: Label,
        provenance: Provenance,
        source_id: &str,
    ) -> Result<Self, PreprocessError> {
        let shape = tensor.shape();
        if shape.len() != 3 || shape[0] != shape[1] || shape[2] != IMAGE_CHANNELS {
            return Err(PreprocessError::ShapeMismatch {
                context: "spectrogram tensor",
                message: format!("expected [s, s, {IMAGE_CHANNELS}], got {shape:?}"),
            });
        }
        let data: Vec<f32> = tensor.data().iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        Spectrogram::new(shape[0], data, label, provenance, source_id)
    }
}

/// Bilinear resampling with half-pixel-centered coordinates and edge clamping.
pub fn resize_bilinear(
    src: &[f64],
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<f64> {
    assert_eq!(src.len(), src_h * src_w);
    assert!(src_h > 0 && src_w > 0 && dst_h > 0 && dst_w > 0);
    let mut out = Vec::with_capacity(dst_h * dst_w);
    for y in 0..dst_h {
        let sy = ((y as f64 + 0.5) * src_h as f64 / dst_h as f64 - 0.5)
            .clamp(0.0, (src_h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(src_h - 1);
        let fy = sy - y0 as f64;
        for x in 0..dst_w {
            let sx = ((x as f64 + 0.5) * src_w as f64 / dst_w as f64 - 0.5)
                .clamp(0.0, (src_w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let fx = sx - x0 as f64;
            let top = src[y0 * src_w + x0] * (1.0 - fx) + src[y0 * src_w + x1] * fx;
            let bottom = src[y1 * src_w + x0] * (1.0 - fx) + src[y1 * src_w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Stack per-channel magnitude matrices into one normalized square image.
/// `channel_mags[c][frame][bin]`; the image's vertical axis runs through
/// channel 0's bins first, then channel 1's, and so on; the horizontal axis
/// is time.
pub fn assemble_spectrogram(
    channel_mags: &[Vec<Vec<f64>>],
    size: usize,
    label: Label,
    provenance: Provenance,
    source_id: &str,
) -> Result<Spectrogram, PreprocessError> {
    if channel_mags.is_empty() || channel_mags[0].is_empty() || channel_mags[0][0].is_empty() {
        return Err(PreprocessError::ShapeMismatch {
            context: "assemble",
            message: "no magnitude data".into(),
        });
    }
    let frames = channel_mags[0].len();
    let bins = channel_mags[0][0].len();
    for (c, mags) in channel_mags.iter().enumerate() {
        if mags.len() != frames || mags.iter().any(|f| f.len() != bins) {
            return Err(PreprocessError::ShapeMismatch {
                context: "assemble",
                message: format!("channel {c} does not match {frames} frames × {bins} bins"),
            });
        }
    }

    let rows = channel_mags.len() * bins;
    let mut raw = vec![0.0f64; rows * frames];
    for (c, mags) in channel_mags.iter().enumerate() {
        for (t, frame) in mags.iter().enumerate() {
            for (b, &m) in frame.iter().enumerate() {
                raw[(c * bins + b) * frames + t] = m.ln_1p();
            }
        }
    }

    let resized = resize_bilinear(&raw, rows, frames, size, size);
    let lo = resized.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = resized.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut data = Vec::with_capacity(size * size * IMAGE_CHANNELS);
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        data.resize(size * size * IMAGE_CHANNELS, -1.0);
    } else {
        for v in resized {
            let mapped = (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0) as f32;
            for _ in 0..IMAGE_CHANNELS {
                data.push(mapped);
            }
        }
    }
    Spectrogram::new(size, data, label, provenance, source_id)
}

pub fn write_spectrogram(spec: &Spectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + spec.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.size as u32).to_le_bytes());
    out.extend_from_slice(&(spec.size as u32).to_le_bytes());
    out.extend_from_slice(&(IMAGE_CHANNELS as u32).to_le_bytes());
    out.push(spec.label.code());
    out.push(spec.provenance.code());
    wire::write_string(&mut out, &spec.source_id);
    out.extend_from_slice(&(spec.data.len() as u64).to_le_bytes());
    for &v in &spec.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn read_spectrogram(bytes: &[u8]) -> Result<Spectrogram, PreprocessError> {
    if bytes.len() < MAGIC.len() + 6 {
        return Err(WireError::Truncated("spectrogram header").into());
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(PreprocessError::Checksum { stored, computed });
    }
    let mut cur = body;
    let magic = wire::take(&mut cur, 4, "magic")?;
    if magic != MAGIC {
        return Err(PreprocessError::BadMagic(magic.to_vec()));
    }
    let version = wire::read_u16(&mut cur, "version")?;
    if version != VERSION {
        return Err(PreprocessError::Version(version));
    }
    let height = wire::read_u32(&mut cur, "height")? as usize;
    let width = wire::read_u32(&mut cur, "width")? as usize;
    let channels = wire::read_u32(&mut cur, "channels")? as usize;
    if height != width || channels != IMAGE_CHANNELS {
        return Err(PreprocessError::ShapeMismatch {
            context: "spectrogram file",
            message: format!("{height}×{width}×{channels} is not square×3"),
        });
    }
    let label_code = wire::read_u8(&mut cur, "label")?;
    let prov_code = wire::read_u8(&mut cur, "provenance")?;
    let source_id = wire::read_string(&mut cur, "source id")?;
    let count = wire::read_u64(&mut cur, "value count")? as usize;
    let data = wire::read_f32_vec(&mut cur, count, "payload")?;
    if !cur.is_empty() {
        return Err(PreprocessError::BadArgument {
            context: "spectrogram file",
            message: format!("{} trailing bytes", cur.len()),
        });
    }
    let label = Label::from_code(label_code).ok_or(PreprocessError::BadArgument {
        context: "spectrogram file",
        message: format!("unknown label code {label_code}"),
    })?;
    let provenance = Provenance::from_code(prov_code).ok_or(PreprocessError::BadArgument {
        context: "spectrogram file",
        message: format!("unknown provenance code {prov_code}"),
    })?;
    Spectrogram::new(height, data, label, provenance, &source_id)
}

pub fn save_spectrogram(spec: &Spectrogram, path: &Path) -> Result<(), PreprocessError> {
    Ok(fs::write(path, write_spectrogram(spec))?)
}

pub fn load_spectrogram(path: &Path) -> Result<Spectrogram, PreprocessError> {
    read_spectrogram(&fs::read(path)?)
}

/// Human-inspection PNG; informational only, nothing downstream reads it.
pub fn export_png(spec: &Spectrogram, path: &Path) -> Result<(), PreprocessError> {
    let s = spec.size as u32;
    let mut img = image::RgbImage::new(s, s);
    for y in 0..spec.size {
        for x in 0..spec.size {
            let px = |c: usize| {
                let v = spec.at(y, x, c);
                ((v as f64 + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8
            };
            img.put_pixel(x as u32, y as u32, image::Rgb([px(0), px(1), px(2)]));
        }
    }
    img.save(path).map_err(|e| PreprocessError::BadArgument {
        context: "png export",
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mags(channels: usize, frames: usize, bins: usize, f: impl Fn(usize, usize, usize) -> f64)
        -> Vec<Vec<Vec<f64>>>
    {
        (0..channels)
            .map(|c| (0..frames).map(|t| (0..bins).map(|b| f(c, t, b)).collect()).collect())
            .collect()
    }

    #[test]
    fn output_is_always_square_by_three_in_range() {
        let m = mags(16, 10, 31, |c, t, b| (c * 31 + b) as f64 * 0.01 + t as f64);
        let spec = assemble_spectrogram(&m, 256, Label::Preictal, Provenance::Real, "s").unwrap();
        assert_eq!(spec.size(), 256);
        assert_eq!(spec.data().len(), 256 * 256 * 3);
        assert!(spec.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        // Min-max normalization always realizes both endpoints.
        assert!(spec.data().iter().any(|&v| v == -1.0));
        assert!(spec.data().iter().any(|&v| v == 1.0));
    }

    #[test]
    fn all_zero_input_maps_to_uniform_minus_one() {
        let m = mags(4, 10, 16, |_, _, _| 0.0);
        let spec = assemble_spectrogram(&m, 64, Label::Interictal, Provenance::Real, "z").unwrap();
        assert!(spec.data().iter().all(|&v| v == -1.0));
        // Any constant input degenerates the same way.
        let m = mags(4, 10, 16, |_, _, _| 7.25);
        let spec = assemble_spectrogram(&m, 64, Label::Interictal, Provenance::Real, "c").unwrap();
        assert!(spec.data().iter().all(|&v| v == -1.0));
    }

    #[test]
    fn identical_input_gives_bit_identical_output() {
        let m = mags(8, 10, 21, |c, t, b| ((c * 7 + t * 3 + b) % 13) as f64 * 0.37);
        let a = assemble_spectrogram(&m, 128, Label::Preictal, Provenance::Real, "d").unwrap();
        let b = assemble_spectrogram(&m, 128, Label::Preictal, Provenance::Real, "d").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn swapping_channels_flips_the_bright_band() {
        let bright = |_: usize, _: usize, _: usize| 10.0;
        let top_bright = {
            let mut m = mags(2, 10, 16, bright);
            m[1] = mags(1, 10, 16, |_, _, _| 0.0).remove(0);
            m
        };
        let bottom_bright = {
            let mut m = mags(2, 10, 16, bright);
            m[0] = mags(1, 10, 16, |_, _, _| 0.0).remove(0);
            m
        };
        let a = assemble_spectrogram(&top_bright, 64, Label::Preictal, Provenance::Real, "a")
            .unwrap();
        let b = assemble_spectrogram(&bottom_bright, 64, Label::Preictal, Provenance::Real, "b")
            .unwrap();
        let half_mean = |s: &Spectrogram, top: bool| -> f64 {
            let range = if top { 0..32 } else { 32..64 };
            let mut sum = 0.0;
            for y in range.clone() {
                for x in 0..64 {
                    sum += s.at(y, x, 0) as f64;
                }
            }
            sum / (32.0 * 64.0)
        };
        assert!(half_mean(&a, true) > half_mean(&a, false) + 0.5);
        assert!(half_mean(&b, false) > half_mean(&b, true) + 0.5);
    }

    #[test]
    fn mismatched_channel_shapes_are_rejected() {
        let mut m = mags(3, 10, 16, |_, _, _| 1.0);
        m[2][9].pop();
        assert!(matches!(
            assemble_spectrogram(&m, 64, Label::Preictal, Provenance::Real, "x"),
            Err(PreprocessError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn bilinear_resize_of_a_monotone_ramp_stays_monotone_and_bounded() {
        let src: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        for dst_len in [7usize, 40, 97, 256] {
            let out = resize_bilinear(&src, 1, 40, 1, dst_len);
            for w in out.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "not monotone: {} then {}", w[0], w[1]);
            }
            assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        // Identity when sizes match.
        let same = resize_bilinear(&src, 1, 40, 1, 40);
        for (a, b) in same.iter().zip(&src) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn file_round_trip_is_bit_exact_and_corruption_is_caught() {
        let m = mags(4, 10, 9, |c, t, b| (c + t + b) as f64 * 0.11);
        let spec = assemble_spectrogram(&m, 32, Label::Preictal, Provenance::Synthetic, "rt")
            .unwrap();
        let bytes = write_spectrogram(&spec);
        let back = read_spectrogram(&bytes).unwrap();
        assert_eq!(spec, back);
        assert_eq!(bytes, write_spectrogram(&back));

        let mut bad = bytes.clone();
        bad[bytes.len() / 2] ^= 0x08;
        assert!(matches!(
            read_spectrogram(&bad).unwrap_err(),
            PreprocessError::Checksum { .. }
        ));

        let mut versioned = bytes.clone();
        versioned[4] = 3;
        let n = versioned.len();
        let crc = crc32fast::hash(&versioned[..n - 4]);
        versioned[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            read_spectrogram(&versioned).unwrap_err(),
            PreprocessError::Version(3)
        ));
    }

    #[test]
    fn tensor_round_trip_and_clamping() {
        let m = mags(2, 10, 5, |c, t, b| (c * 50 + t * 5 + b) as f64);
        let spec = assemble_spectrogram(&m, 16, Label::Preictal, Provenance::Real, "t").unwrap();
        let tensor = spec.to_tensor();
        assert_eq!(tensor.shape(), &[16, 16, 3]);
        let back =
            Spectrogram::from_tensor(&tensor, spec.label, spec.provenance, &spec.source_id)
                .unwrap();
        assert_eq!(spec, back);

        let hot = Tensor::from_vec(&[2, 2, 3], vec![1.5f32; 12]).unwrap();
        let clamped =
            Spectrogram::from_tensor(&hot, Label::Preictal, Provenance::Synthetic, "h").unwrap();
        assert!(clamped.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn png_export_writes_a_decodable_image() {
        let m = mags(2, 10, 5, |c, t, b| (c + t * b) as f64);
        let spec = assemble_spectrogram(&m, 32, Label::Preictal, Provenance::Real, "png").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.png");
        export_png(&spec, &path).unwrap();
        let img = image::open(&path).unwrap();
        assert_eq!(img.width(), 32);
        assert_eq!(img.height(), 32);
    }
}
