//! STT1 tensor container.
//!
//! Layout: magic `STT1`, one dtype byte (0 = f32, 1 = f64), one rank byte,
//! `rank` little-endian u32 dims, then the row-major little-endian payload.
//! Writing then reading at the same dtype is bit-exact.

use std::path::Path;

use super::{DType, Real, Tensor};
use crate::error::{Error, Result};
use crate::fsio;

pub const MAGIC: &[u8; 4] = b"STT1";

pub fn encode<F: Real>(t: &Tensor<F>) -> Result<Vec<u8>> {
    let rank = u8::try_from(t.rank()).map_err(|_| Error::contract("STT1 rank exceeds 255"))?;
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + t.numel() * F::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.push(F::DTYPE as u8);
    out.push(rank);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::contract("STT1 dim exceeds u32"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        match F::DTYPE {
            DType::F32 => out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
            DType::F64 => out.extend_from_slice(&v.as_f64().to_le_bytes()),
        }
    }
    Ok(out)
}

/// Parses a container. Values stored at the other precision are converted.
pub fn decode<F: Real>(bytes: &[u8], origin: &Path) -> Result<Tensor<F>> {
    let bad = |reason: &str| Error::format(origin, reason);
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(bad("missing STT1 magic"));
    }
    let dtype = DType::from_code(bytes[4]).ok_or_else(|| bad("unknown dtype code"))?;
    let rank = bytes[5] as usize;
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err(bad("truncated dims"));
    }
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("chunk of 4")) as usize)
        .collect();
    let numel = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("dims overflow"))?;
    let payload = &bytes[header..];
    if Some(payload.len()) != numel.checked_mul(dtype.size()) {
        return Err(bad("payload length does not match dims"));
    }
    let data = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| F::of(f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64))
            .collect(),
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| F::of(f64::from_le_bytes(c.try_into().expect("chunk of 8"))))
            .collect(),
    };
    Tensor::new(dims, data)
}

pub fn write<F: Real>(path: &Path, t: &Tensor<F>) -> Result<()> {
    fsio::write_atomic(path, &encode(t)?)
}

pub fn read<F: Real>(path: &Path) -> Result<Tensor<F>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::<f32>::new([2, 1], vec![1.0, -2.5]).unwrap();
        let b = encode(&t).unwrap();
        assert_eq!(&b[..6], b"STT1\x00\x02");
        assert_eq!(&b[6..14], &[2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&b[14..18], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 22);
    }

    #[test]
    fn rejects_truncation() {
        let t = Tensor::<f64>::zeros([3]);
        let b = encode(&t).unwrap();
        assert!(decode::<f64>(&b[..b.len() - 1], Path::new("x")).is_err());
        assert!(decode::<f64>(b"STT0\x00\x00", Path::new("x")).is_err());
    }
}
