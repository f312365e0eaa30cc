//! `.bmt` binary tensor container.
//!
//! Layout: magic `BMT1`, a `u8` dtype code, a `u8` rank, `rank` little-endian
//! `u64` dimensions, then the row-major little-endian payload.

use std::fs;
use std::path::Path;

use num_complex::Complex32;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BMT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 1,
    F64 = 2,
    /// Interleaved `(re, im)` pairs of `f32`.
    C64 = 3,
}

impl DType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            3 => Some(DType::C64),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::C64 => "c64",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [DType::F32, DType::F64, DType::C64]
            .into_iter()
            .find(|d| d.name() == name)
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 | DType::C64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BmtData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    C64(Vec<Complex32>),
}

impl BmtData {
    pub fn dtype(&self) -> DType {
        match self {
            BmtData::F32(_) => DType::F32,
            BmtData::F64(_) => DType::F64,
            BmtData::C64(_) => DType::C64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            BmtData::F32(v) => v.len(),
            BmtData::F64(v) => v.len(),
            BmtData::C64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BmtArray {
    pub dims: Vec<usize>,
    pub data: BmtData,
}

impl BmtArray {
    pub fn new(dims: Vec<usize>, data: BmtData) -> Result<Self> {
        if dims.len() > u8::MAX as usize || dims.iter().product::<usize>() != data.len() {
            return Err(Error::shape("bmt", &dims, &[data.len()]));
        }
        Ok(Self { dims, data })
    }

    pub fn f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, BmtData::F32(data))
    }

    pub fn f64(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(dims, BmtData::F64(data))
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn into_f32(self) -> Option<Vec<f32>> {
        match self.data {
            BmtData::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn into_f64(self) -> Option<Vec<f64>> {
        match self.data {
            BmtData::F64(v) => Some(v),
            _ => None,
        }
    }

    pub fn header_len(&self) -> usize {
        6 + 8 * self.dims.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header_len() + self.data.len() * self.dtype().size());
        out.extend_from_slice(MAGIC);
        out.push(self.dtype().code());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            BmtData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            BmtData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            BmtData::C64(v) => v.iter().for_each(|z| {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }),
        }
        out
    }

    /// Parses a container; `origin` names the source in error messages.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: String| Error::format(origin, msg);
        if bytes.len() < 6 || &bytes[..4] != MAGIC {
            return Err(bad("missing BMT1 magic".into()));
        }
        let dtype = DType::from_code(bytes[4]).ok_or_else(|| bad(format!("unknown dtype code {}", bytes[4])))?;
        let rank = bytes[5] as usize;
        let header = 6 + 8 * rank;
        if bytes.len() < header {
            return Err(bad("truncated header".into()));
        }
        let dims: Vec<usize> = bytes[6..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bad("dimension product overflows".into()))?;
        let payload = &bytes[header..];
        if payload.len() != count * dtype.size() {
            return Err(bad(format!(
                "payload is {} bytes, dims {dims:?} of {} need {}",
                payload.len(),
                dtype.name(),
                count * dtype.size()
            )));
        }
        let data = match dtype {
            DType::F32 => BmtData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => BmtData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::C64 => BmtData::C64(
                payload
                    .chunks_exact(8)
                    .map(|c| {
                        Complex32::new(
                            f32::from_le_bytes(c[..4].try_into().unwrap()),
                            f32::from_le_bytes(c[4..].try_into().unwrap()),
                        )
                    })
                    .collect(),
            ),
        };
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn power_vector_payload_is_256_bytes() {
        let a = BmtArray::f32(vec![64], (0..64).map(|i| i as f32).collect()).unwrap();
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..4], b"BMT1");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 1);
        assert_eq!(u64::from_le_bytes(bytes[6..14].try_into().unwrap()), 64);
        assert_eq!(bytes.len() - a.header_len(), 256);
        assert_eq!(&bytes[14 + 4..14 + 8], &1.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let a = BmtArray::f64(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = a.to_bytes();
        let p = Path::new("x.bmt");
        assert!(BmtArray::from_bytes(&bytes[..bytes.len() - 1], p).is_err());
        bytes[4] = 9;
        assert!(BmtArray::from_bytes(&bytes, p).is_err());
        assert!(BmtArray::from_bytes(b"NOPE", p).is_err());
    }

    #[test]
    fn complex_roundtrip() {
        let a = BmtArray::new(
            vec![3],
            BmtData::C64(vec![
                Complex32::new(1.0, -2.0),
                Complex32::new(0.5, 0.25),
                Complex32::new(0.0, 3.0),
            ]),
        )
        .unwrap();
        assert_eq!(BmtArray::from_bytes(&a.to_bytes(), Path::new("c")).unwrap(), a);
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(dims in prop::collection::vec(1usize..4, 0..4), seed in any::<u32>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n).map(|i| f32::from_bits(seed.wrapping_add((i as u32).wrapping_mul(2654435761)) & 0x7f7f_ffff)).collect();
            let a = BmtArray::f32(dims, data).unwrap();
            let bytes = a.to_bytes();
            let back = BmtArray::from_bytes(&bytes, Path::new("p")).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
