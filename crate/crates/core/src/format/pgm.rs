//! Binary 8-bit PGM (P5) images.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Quantize values in [0,1] to bytes, rounding to nearest.
    pub fn from_unit(width: usize, height: usize, values: &[f64]) -> Self {
        let pixels = values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        Self { width, height, pixels }
    }

    pub fn to_unit(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut pos = 0;
        let mut next_token = || -> Option<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if next_token().as_deref() != Some("P5") {
            return Err(bad("not a binary PGM (P5)"));
        }
        let mut num = || next_token().and_then(|t| t.parse::<usize>().ok());
        let (width, height, maxval) = match (num(), num(), num()) {
            (Some(w), Some(h), Some(m)) => (w, h, m),
            _ => return Err(bad("malformed PGM header")),
        };
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        // exactly one whitespace byte separates header and raster
        let start = pos + 1;
        if bytes.len() != start + width * height {
            return Err(bad("raster size does not match header"));
        }
        Ok(Self {
            width,
            height,
            pixels: bytes[start..].to_vec(),
        })
    }
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    fs::write(path, image.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(path.to_path_buf())),
        Err(e) => return Err(Error::io(path, e)),
    };
    GrayImage::decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_within_quantization() {
        let vals: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let img = GrayImage::from_unit(4, 3, &vals);
        let back = GrayImage::decode(&img.encode(), Path::new("m.pgm")).unwrap();
        assert_eq!(back, img);
        for (a, b) in back.to_unit().iter().zip(&vals) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn header_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        let img = GrayImage::decode(&bytes, Path::new("c.pgm")).unwrap();
        assert_eq!((img.width, img.height, img.pixels.clone()), (2, 1, vec![7, 9]));
    }

    #[test]
    fn rejects_other_formats() {
        assert!(GrayImage::decode(b"P2\n1 1\n255\n0", Path::new("x")).is_err());
        assert!(GrayImage::decode(b"P5\n2 2\n255\n\x00", Path::new("x")).is_err());
    }
}
