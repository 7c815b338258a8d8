//! Binary checkpoint format for named f32 tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PFCK"  magic, 4 bytes
//! u16     format version (currently 1)
//! u32     entry count
//! entry*  u16 name length | name (UTF-8) | u32 rank | u32 * rank dims
//!         | f32 * prod(dims) payload
//! ```
//!
//! Rank-0 entries carry exactly one payload value and encode scalars such as
//! step counters. Writing is insertion-ordered and reading preserves that
//! order, so save → load → save reproduces the file byte for byte.

use crate::error::{NumError, Result};
use crate::tensor::Tensor;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PFCK";
const VERSION: u16 = 1;
/// Refuse payloads above this element count when reading; guards against
/// allocating from a corrupt length field.
const MAX_ELEMENTS: u64 = 1 << 30;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<f32>) -> Result<()> {
        if name.len() > u16::MAX as usize {
            return Err(NumError::Checkpoint(format!(
                "entry name exceeds {} bytes",
                u16::MAX
            )));
        }
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(NumError::Checkpoint(format!("duplicate entry name {name:?}")));
        }
        self.entries.push((name.to_string(), tensor));
        Ok(())
    }

    /// Store a scalar as a rank-0 tensor.
    pub fn insert_scalar(&mut self, name: &str, value: f64) -> Result<()> {
        self.insert(name, Tensor::scalar(value as f32))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    /// Fetch an entry, erroring with its name if absent.
    pub fn require(&self, name: &str) -> Result<&Tensor<f32>> {
        self.get(name)
            .ok_or_else(|| NumError::Checkpoint(format!("missing entry {name:?}")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let t = self.require(name)?;
        if !t.is_scalar() {
            return Err(NumError::Checkpoint(format!(
                "entry {name:?} has shape {:?}, expected a scalar",
                t.shape()
            )));
        }
        Ok(t.data()[0] as f64)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self) -> &[(String, Tensor<f32>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, tensor) in &self.entries {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
            for &d in tensor.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in tensor.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_all(r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(NumError::Checkpoint(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let version = read_u16(r, "version")?;
        if version != VERSION {
            return Err(NumError::Checkpoint(format!(
                "unsupported format version {version} (reader supports {VERSION})"
            )));
        }
        let count = read_u32(r, "entry count")?;
        let mut out = Checkpoint::new();
        for i in 0..count {
            let name_len = read_u16(r, "name length")? as usize;
            let mut name_buf = vec![0u8; name_len];
            read_all(r, &mut name_buf, "entry name")?;
            let name = String::from_utf8(name_buf).map_err(|_| {
                NumError::Checkpoint(format!("entry {i} name is not valid UTF-8"))
            })?;
            let rank = read_u32(r, "rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            let mut elements: u64 = 1;
            for _ in 0..rank {
                let d = read_u32(r, "dimension")? as u64;
                elements = elements.saturating_mul(d);
                shape.push(d as usize);
            }
            if elements > MAX_ELEMENTS {
                return Err(NumError::Checkpoint(format!(
                    "entry {name:?} declares {elements} elements, above the {MAX_ELEMENTS} limit"
                )));
            }
            let mut data = Vec::with_capacity(elements as usize);
            let mut buf = [0u8; 4];
            for _ in 0..elements {
                read_all(r, &mut buf, "payload")?;
                data.push(f32::from_le_bytes(buf));
            }
            out.insert(&name, Tensor::from_vec(&shape, data)?)?;
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(NumError::Checkpoint(
                "trailing bytes after final entry".into(),
            ));
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_all(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| NumError::Checkpoint(format!("truncated while reading {what}")))
}

fn read_u16(r: &mut impl Read, what: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    read_all(r, &mut b, what)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_all(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert(
            "gen.layer0.weights",
            Tensor::from_vec(&[2, 3], vec![0.5, -1.25, 3.0, f32::MIN_POSITIVE, 1e30, -0.0])
                .unwrap(),
        )
        .unwrap();
        ck.insert_scalar("optim.g.step_count", 1234.0).unwrap();
        ck.insert("empty", Tensor::zeros(&[0])).unwrap();
        ck
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.len(), ck.len());
        for ((na, ta), (nb, tb)) in ck.entries().iter().zip(back.entries()) {
            assert_eq!(na, nb);
            assert_eq!(ta.shape(), tb.shape());
            for (a, b) in ta.data().iter().zip(tb.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // Re-serializing the loaded checkpoint reproduces the exact bytes.
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.scalar("optim.g.step_count").unwrap(), 1234.0);
        assert_eq!(back.get("gen.layer0.weights").unwrap().shape(), &[2, 3]);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = Vec::new();
        sample().write_to(&mut bytes).unwrap();
        bytes[0] = b'X';
        let err = Checkpoint::read_from(&mut bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let mut bytes = Vec::new();
        sample().write_to(&mut bytes).unwrap();
        bytes[4] = 9;
        let err = Checkpoint::read_from(&mut bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn truncation_anywhere_is_an_error_not_a_panic() {
        let mut bytes = Vec::new();
        sample().write_to(&mut bytes).unwrap();
        for cut in 0..bytes.len() {
            let err = Checkpoint::read_from(&mut &bytes[..cut]).unwrap_err();
            assert!(err.to_string().contains("truncated"), "cut {cut}: {err}");
        }
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut bytes = Vec::new();
        sample().write_to(&mut bytes).unwrap();
        bytes.push(0);
        let err = Checkpoint::read_from(&mut bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut ck = Checkpoint::new();
        ck.insert("a", Tensor::scalar(1.0)).unwrap();
        let err = ck.insert("a", Tensor::scalar(2.0)).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn scalar_access_checks_rank() {
        let mut ck = Checkpoint::new();
        ck.insert("vec", Tensor::zeros(&[3])).unwrap();
        assert!(ck.scalar("vec").is_err());
        assert!(ck.scalar("absent").is_err());
    }
}
