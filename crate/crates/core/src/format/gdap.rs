//! GDAP binary tensor files.
//!
//! Layout: magic `GDAP`, `u8` version (1), `u8` dtype (0 = f32, 1 = f64),
//! `u8` rank, `rank` little-endian `u32` dims, then row-major little-endian
//! values.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GDAP";
const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdapTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub dtype: Dtype,
}

impl GdapTensor {
    pub fn f64(shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            shape,
            data,
            dtype: Dtype::F64,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        assert_eq!(self.shape.iter().product::<usize>(), self.data.len());
        let mut out = Vec::with_capacity(7 + 4 * self.shape.len() + self.dtype.width() * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dtype.code());
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match self.dtype {
            Dtype::F32 => self
                .data
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            Dtype::F64 => self.data.iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < 7 || &bytes[..4] != MAGIC {
            return Err(bad("bad magic, expected GDAP".into()));
        }
        if bytes[4] != VERSION {
            return Err(bad(format!("unsupported version {}", bytes[4])));
        }
        let dtype = match bytes[5] {
            0 => Dtype::F32,
            1 => Dtype::F64,
            other => return Err(bad(format!("unknown dtype code {other}"))),
        };
        let rank = bytes[6] as usize;
        let header = 7 + 4 * rank;
        if bytes.len() < header {
            return Err(bad("truncated header".into()));
        }
        let shape: Vec<usize> = (0..rank)
            .map(|i| u32::from_le_bytes(bytes[7 + 4 * i..11 + 4 * i].try_into().unwrap()) as usize)
            .collect();
        let n: usize = shape.iter().product();
        let body = &bytes[header..];
        if body.len() != n * dtype.width() {
            return Err(bad(format!(
                "expected {} value bytes for shape {:?}, found {}",
                n * dtype.width(),
                shape,
                body.len()
            )));
        }
        let data = match dtype {
            Dtype::F32 => body
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => body
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        Ok(Self { shape, data, dtype })
    }
}

pub fn write_gdap(path: &Path, tensor: &GdapTensor) -> Result<()> {
    fs::write(path, tensor.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_gdap(path: &Path) -> Result<GdapTensor> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(path.to_path_buf())),
        Err(e) => return Err(Error::io(path, e)),
    };
    GdapTensor::decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let t = GdapTensor::f64(vec![2, 1], vec![1.5, -2.0]);
        let b = t.encode();
        assert_eq!(&b[..4], b"GDAP");
        assert_eq!(b[4], 1);
        assert_eq!(b[5], 1);
        assert_eq!(b[6], 2);
        assert_eq!(&b[7..11], &2u32.to_le_bytes());
        assert_eq!(&b[11..15], &1u32.to_le_bytes());
        assert_eq!(&b[15..23], &1.5f64.to_le_bytes());
        assert_eq!(b.len(), 31);
    }

    #[test]
    fn corrupt_magic_is_a_format_error() {
        let mut b = GdapTensor::f64(vec![1], vec![0.0]).encode();
        b[0] = b'X';
        assert!(matches!(
            GdapTensor::decode(&b, Path::new("x")),
            Err(Error::Format { .. })
        ));
        let short = &GdapTensor::f64(vec![3], vec![0.0; 3]).encode()[..20];
        assert!(GdapTensor::decode(short, Path::new("x")).is_err());
    }

    #[test]
    fn f32_roundtrip_rounds_values() {
        let t = GdapTensor {
            shape: vec![2],
            data: vec![0.1, 3.0],
            dtype: Dtype::F32,
        };
        let back = GdapTensor::decode(&t.encode(), Path::new("x")).unwrap();
        assert_eq!(back.data, vec![0.1f32 as f64, 3.0]);
    }

    proptest! {
        #[test]
        fn f64_roundtrip_is_bitwise(shape in prop::collection::vec(1usize..5, 0..4), seed in any::<u64>()) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|i| f64::from_bits(seed.wrapping_mul(i as u64 + 1) >> 2)).collect();
            let t = GdapTensor::f64(shape, data);
            let back = GdapTensor::decode(&t.encode(), Path::new("x")).unwrap();
            prop_assert_eq!(back.shape, t.shape);
            prop_assert!(back.data.iter().zip(&t.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
