//! Image and fragment-buffer files.
//!
//! PNG output is 8-bit per channel with values rounded half-to-even. The
//! fragment dump is little-endian binary: the header line `rigdiff-frag/1\n`,
//! `u32` width and height, then one record per pixel in row-major order —
//! `i32` triangle id (-1 for background), three `f32` barycentric weights,
//! and one `f32` depth.

use std::io::{Read, Write};
use std::path::Path;

use super::{Fragment, FragmentBuffer, ImageBuf};
use crate::error::{CoreError, CoreResult};

pub const FRAG_HEADER: &[u8] = b"rigdiff-frag/1\n";

/// Rounds to the nearest integer, ties to even.
pub fn round_half_even(x: f64) -> f64 {
    let floor = x.floor();
    let diff = x - floor;
    if diff > 0.5 {
        floor + 1.0
    } else if diff < 0.5 {
        floor
    } else if (floor as i64) % 2 == 0 {
        floor
    } else {
        floor + 1.0
    }
}

pub fn quantize(img: &ImageBuf) -> Vec<u8> {
    img.data
        .iter()
        .map(|v| round_half_even(v.clamp(0.0, 1.0) * 255.0) as u8)
        .collect()
}

pub fn dequantize(width: u32, height: u32, bytes: &[u8]) -> ImageBuf {
    ImageBuf {
        width,
        height,
        data: bytes.iter().map(|b| *b as f64 / 255.0).collect(),
    }
}

pub fn save_png(img: &ImageBuf, path: &Path) -> CoreResult<()> {
    let buf = image::RgbImage::from_raw(img.width, img.height, quantize(img))
        .expect("image buffer size");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CoreError::Io(std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    Ok(())
}

pub fn load_png(path: &Path) -> CoreResult<ImageBuf> {
    let img = image::open(path)
        .map_err(|e| CoreError::Io(std::io::Error::new(std::io::ErrorKind::Other, e)))?
        .to_rgb8();
    Ok(dequantize(img.width(), img.height(), img.as_raw()))
}

pub fn save_fragments(fb: &FragmentBuffer, path: &Path) -> CoreResult<()> {
    let mut out = Vec::with_capacity(FRAG_HEADER.len() + 8 + fb.frags.len() * 20);
    out.extend_from_slice(FRAG_HEADER);
    out.extend_from_slice(&fb.width.to_le_bytes());
    out.extend_from_slice(&fb.height.to_le_bytes());
    for f in &fb.frags {
        out.extend_from_slice(&f.tri.to_le_bytes());
        for b in f.bary {
            out.extend_from_slice(&(b as f32).to_le_bytes());
        }
        let depth = if f.depth.is_finite() { f.depth as f32 } else { f32::INFINITY };
        out.extend_from_slice(&depth.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn load_fragments(path: &Path) -> CoreResult<FragmentBuffer> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < FRAG_HEADER.len() + 8 || &bytes[..FRAG_HEADER.len()] != FRAG_HEADER {
        return Err(CoreError::Parse { line: 1, msg: "bad fragment dump header".into() });
    }
    let mut at = FRAG_HEADER.len();
    let read_u32 = |bytes: &[u8], at: &mut usize| {
        let v = u32::from_le_bytes(bytes[*at..*at + 4].try_into().unwrap());
        *at += 4;
        v
    };
    let width = read_u32(&bytes, &mut at);
    let height = read_u32(&bytes, &mut at);
    let count = (width * height) as usize;
    if bytes.len() != FRAG_HEADER.len() + 8 + count * 20 {
        return Err(CoreError::Parse { line: 1, msg: "fragment dump length mismatch".into() });
    }
    let mut frags = Vec::with_capacity(count);
    for _ in 0..count {
        let tri = i32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        at += 4;
        let mut bary = [0.0; 3];
        for b in &mut bary {
            *b = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64;
            at += 4;
        }
        let depth = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64;
        at += 4;
        frags.push(Fragment { tri, bary, depth });
    }
    Ok(FragmentBuffer { width, height, frags })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_half_even_ties() {
        assert_eq!(round_half_even(0.5), 0.0);
        assert_eq!(round_half_even(1.5), 2.0);
        assert_eq!(round_half_even(2.5), 2.0);
        assert_eq!(round_half_even(3.5), 4.0);
        assert_eq!(round_half_even(2.4), 2.0);
        assert_eq!(round_half_even(2.6), 3.0);
    }

    #[test]
    fn fragment_dump_roundtrip() {
        let dir = std::env::temp_dir().join("rigdiff-frag-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fb.bin");
        let fb = FragmentBuffer {
            width: 3,
            height: 2,
            frags: vec![
                Fragment { tri: -1, bary: [0.0; 3], depth: f64::INFINITY },
                Fragment { tri: 4, bary: [0.25, 0.5, 0.25], depth: 3.5 },
                Fragment { tri: 0, bary: [1.0, 0.0, 0.0], depth: 1.0 },
                Fragment { tri: -1, bary: [0.0; 3], depth: f64::INFINITY },
                Fragment { tri: 2, bary: [0.125, 0.375, 0.5], depth: 9.0 },
                Fragment { tri: -1, bary: [0.0; 3], depth: f64::INFINITY },
            ],
        };
        save_fragments(&fb, &path).unwrap();
        let back = load_fragments(&path).unwrap();
        assert_eq!(back.width, 3);
        assert_eq!(back.height, 2);
        for (a, b) in fb.frags.iter().zip(&back.frags) {
            assert_eq!(a.tri, b.tri);
            for k in 0..3 {
                assert!((a.bary[k] - b.bary[k]).abs() < 1e-6);
            }
        }
        let bytes1 = std::fs::read(&path).unwrap();
        save_fragments(&back, &path).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
    }
}
