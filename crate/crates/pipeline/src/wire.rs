//! Little-endian read/write helpers shared by the binary artifact formats.
//! Readers take a mutable byte-slice cursor and report *what* was being read
//! when the data ran out, so format errors point at a field, not an offset.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} is not valid UTF-8")]
    BadString(&'static str),
}

pub fn take<'a>(buf: &mut &'a [u8], n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
    if buf.len() < n {
        return Err(WireError::Truncated(what));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

pub fn read_u8(buf: &mut &[u8], what: &'static str) -> Result<u8, WireError> {
    Ok(take(buf, 1, what)?[0])
}

pub fn read_u16(buf: &mut &[u8], what: &'static str) -> Result<u16, WireError> {
    Ok(u16::from_le_bytes(take(buf, 2, what)?.try_into().unwrap()))
}

pub fn read_u32(buf: &mut &[u8], what: &'static str) -> Result<u32, WireError> {
    Ok(u32::from_le_bytes(take(buf, 4, what)?.try_into().unwrap()))
}

pub fn read_u64(buf: &mut &[u8], what: &'static str) -> Result<u64, WireError> {
    Ok(u64::from_le_bytes(take(buf, 8, what)?.try_into().unwrap()))
}

pub fn read_f64(buf: &mut &[u8], what: &'static str) -> Result<f64, WireError> {
    Ok(f64::from_le_bytes(take(buf, 8, what)?.try_into().unwrap()))
}

/// u16 length prefix + UTF-8 bytes.
pub fn read_string(buf: &mut &[u8], what: &'static str) -> Result<String, WireError> {
    let len = read_u16(buf, what)? as usize;
    let bytes = take(buf, len, what)?;
    String::from_utf8(bytes.to_vec()).map_err(|_| WireError::BadString(what))
}

pub fn read_f32_vec(
    buf: &mut &[u8],
    count: usize,
    what: &'static str,
) -> Result<Vec<f32>, WireError> {
    let bytes = take(buf, count * 4, what)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_string(out: &mut Vec<u8>, s: &str) {
    debug_assert!(s.len() <= u16::MAX as usize);
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_primitives() {
        let mut out = Vec::new();
        out.push(7u8);
        out.extend_from_slice(&513u16.to_le_bytes());
        out.extend_from_slice(&70000u32.to_le_bytes());
        out.extend_from_slice(&u64::MAX.to_le_bytes());
        out.extend_from_slice(&(-1.5f64).to_le_bytes());
        write_string(&mut out, "héllo");
        out.extend_from_slice(&1.25f32.to_le_bytes());

        let mut cur = out.as_slice();
        assert_eq!(read_u8(&mut cur, "a").unwrap(), 7);
        assert_eq!(read_u16(&mut cur, "b").unwrap(), 513);
        assert_eq!(read_u32(&mut cur, "c").unwrap(), 70000);
        assert_eq!(read_u64(&mut cur, "d").unwrap(), u64::MAX);
        assert_eq!(read_f64(&mut cur, "e").unwrap(), -1.5);
        assert_eq!(read_string(&mut cur, "f").unwrap(), "héllo");
        assert_eq!(read_f32_vec(&mut cur, 1, "g").unwrap(), vec![1.25]);
        assert!(cur.is_empty());
    }

    #[test]
    fn truncation_names_the_field() {
        let mut cur: &[u8] = &[1, 2];
        let err = read_u32(&mut cur, "sample count").unwrap_err();
        assert_eq!(err.to_string(), "truncated while reading sample count");
    }
}
