//! FMAT: `"FMAT1\0"`, u32 LE rows, u32 LE cols, then f32 LE values row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::FeatureMatrix;

pub const MAGIC: &[u8; 6] = b"FMAT1\0";
pub const HEADER_LEN: usize = 14;

pub fn encode_fmat(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses FMAT bytes; `path` only labels errors.
pub fn decode_fmat(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let fail = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    let truncated = |what: &str| fail(bytes.len(), format!("truncated {what}"));

    let magic_len = bytes.len().min(MAGIC.len());
    if let Some(i) = (0..magic_len).find(|&i| bytes[i] != MAGIC[i]) {
        return Err(fail(i, "bad magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated("header"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let rows = word(6);
    let cols = word(10);
    if rows == 0 {
        return Err(fail(6, "zero rows".into()));
    }
    if cols == 0 {
        return Err(fail(10, "zero columns".into()));
    }
    let payload = (rows as u64)
        .checked_mul(cols as u64)
        .and_then(|n| n.checked_mul(4))
        .filter(|&n| n <= (usize::MAX - HEADER_LEN) as u64)
        .ok_or_else(|| fail(6, format!("size {rows}x{cols} overflows")))? as usize;
    let expected = HEADER_LEN + payload;
    if bytes.len() < expected {
        return Err(truncated("payload"));
    }
    if bytes.len() > expected {
        return Err(fail(expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let mut data = Vec::with_capacity(payload / 4);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(fail(HEADER_LEN + 4 * i, format!("non-finite value {v}")));
        }
        data.push(v);
    }
    Ok(FeatureMatrix::from_raw(rows as usize, cols as usize, data))
}

pub fn write_fmat(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if m.rows() > u32::MAX as usize || m.cols() > u32::MAX as usize {
        return Err(Error::Shape(format!("{}x{} exceeds FMAT limits", m.rows(), m.cols())));
    }
    fs::write(path, encode_fmat(m)).map_err(|e| Error::io(path, e))
}

pub fn read_fmat(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fmat(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offset(r: Result<FeatureMatrix>) -> u64 {
        match r {
            Err(Error::Format { offset, .. }) => offset,
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn single_value_is_18_bytes() {
        let m = FeatureMatrix::new(1, 1, vec![0.0]).unwrap();
        assert_eq!(encode_fmat(&m).len(), 18);
    }

    #[test]
    fn bad_magic_at_zero() {
        let mut b = encode_fmat(&FeatureMatrix::zeros(2, 2));
        b[..4].copy_from_slice(b"XMAT");
        assert_eq!(offset(decode_fmat(&b, Path::new("x"))), 0);
    }

    #[test]
    fn truncation_points_at_end() {
        let b = encode_fmat(&FeatureMatrix::zeros(2, 3));
        for cut in [3usize, 8, 14, 20, b.len() - 1] {
            assert_eq!(offset(decode_fmat(&b[..cut], Path::new("x"))), cut as u64);
        }
    }

    #[test]
    fn trailing_and_overflow() {
        let mut b = encode_fmat(&FeatureMatrix::zeros(1, 2));
        b.push(0);
        assert_eq!(offset(decode_fmat(&b, Path::new("x"))), 22);
        let mut h = MAGIC.to_vec();
        h.extend_from_slice(&u32::MAX.to_le_bytes());
        h.extend_from_slice(&u32::MAX.to_le_bytes());
        let r = decode_fmat(&h, Path::new("x"));
        // 64-bit hosts fit the size and report truncation instead
        assert!(matches!(r, Err(Error::Format { .. })));
    }

    #[test]
    fn nan_rejected_with_offset() {
        let mut b = encode_fmat(&FeatureMatrix::zeros(1, 3));
        b[18..22].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(offset(decode_fmat(&b, Path::new("x"))), 18);
    }
}
