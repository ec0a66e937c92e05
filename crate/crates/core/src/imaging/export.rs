//! Grayscale image export and raw scalar dumps shared by frames, confidence
//! maps, heatmaps and masks.
//!
//! Raw dump layout (little endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `GRSG` |
//! | 2 | format version (1) |
//! | 1 | scalar width in bytes (4 or 8) |
//! | 1 | reserved, zero |
//! | 4 | width (columns) |
//! | 4 | depth (rows) |
//! | 8 | pixel pitch, mm, f64 |
//! | w*d*scalar | row-major values |

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"GRSG";
const RAW_VERSION: u16 = 1;
const HEADER_LEN: usize = 24;

pub fn encode_raw<T: Scalar>(grid: &Grid<T>, pixel_pitch: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + grid.as_slice().len() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&RAW_VERSION.to_le_bytes());
    out.push(T::BYTES as u8);
    out.push(0);
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.depth() as u32).to_le_bytes());
    out.extend_from_slice(&pixel_pitch.to_le_bytes());
    for &v in grid.as_slice() {
        v.le_bytes(&mut out);
    }
    out
}

/// Decodes a raw dump, returning the grid and its pixel pitch.
pub fn decode_raw<T: Scalar>(bytes: &[u8]) -> Result<(Grid<T>, f64)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corrupt("raw dump shorter than its header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Corrupt("raw dump has bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != RAW_VERSION {
        return Err(Error::Version {
            found: version as u32,
            expected: RAW_VERSION as u32,
        });
    }
    if bytes[6] as usize != T::BYTES {
        return Err(Error::Domain(format!(
            "raw dump stores {}-byte scalars, requested {}",
            bytes[6],
            T::BYTES
        )));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let depth = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let pitch = f64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let body = &bytes[HEADER_LEN..];
    if body.len() != width * depth * T::BYTES {
        return Err(Error::Corrupt(format!(
            "raw dump body has {} bytes, header promises {}",
            body.len(),
            width * depth * T::BYTES
        )));
    }
    let data = body.chunks_exact(T::BYTES).map(T::from_le_slice).collect();
    Ok((Grid::from_vec(width, depth, data)?, pitch))
}

pub fn write_raw<T: Scalar>(path: &Path, grid: &Grid<T>, pixel_pitch: f64) -> Result<()> {
    std::fs::write(path, encode_raw(grid, pixel_pitch))?;
    Ok(())
}

pub fn read_raw<T: Scalar>(path: &Path) -> Result<(Grid<T>, f64)> {
    decode_raw(&std::fs::read(path)?)
}

/// Quantizes `[0, 1]` values to 8-bit gray (values outside are clamped).
pub fn to_gray8<T: Scalar>(grid: &Grid<T>) -> GrayImage {
    let px = grid
        .as_slice()
        .iter()
        .map(|v| (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    GrayImage::from_raw(grid.width() as u32, grid.depth() as u32, px).expect("sized buffer")
}

pub fn mask_to_gray8(mask: &Mask) -> GrayImage {
    let px = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    GrayImage::from_raw(mask.width() as u32, mask.depth() as u32, px).expect("sized buffer")
}

/// Writes a binary portable graymap (`.pgm`).
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    img.save_with_format(path, ImageFormat::Pnm)
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(img.to_luma8())
}

/// PNG bytes, used for the compressed frames on the wire.
pub fn encode_png(img: &GrayImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    buf.into_inner()
}

/// SHA-256 over the shape and little-endian values, hex encoded.
pub fn digest<T: Scalar>(grid: &Grid<T>) -> String {
    let mut bytes = Vec::with_capacity(8 + grid.as_slice().len() * T::BYTES);
    bytes.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(grid.depth() as u32).to_le_bytes());
    for &v in grid.as_slice() {
        v.le_bytes(&mut bytes);
    }
    hex::encode(Sha256::digest(&bytes))
}
