//! Binary rasters. Both containers share the layout: 4 magic bytes, u32 LE
//! width, u32 LE height, then row-major pixels (f32 LE meters for depth,
//! one byte per pixel for masks with nonzero meaning set).

use std::path::Path;

use objflow_core::depthflow::{DepthMap, Mask};

use super::{read_bytes, write_atomic, FormatError};

pub const DEPTH_MAGIC: &[u8; 4] = b"D2FD";
pub const MASK_MAGIC: &[u8; 4] = b"D2FM";

const HEADER: usize = 12;

fn header(bytes: &[u8], magic: &[u8; 4], path: &Path) -> Result<(u32, u32), FormatError> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(FormatError::BadMagic { path: path.to_path_buf() });
    }
    if bytes.len() < HEADER {
        return Err(FormatError::invalid(path, "truncated header"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width == 0 || height == 0 {
        return Err(FormatError::invalid(path, format!("empty raster {width}x{height}")));
    }
    Ok((width, height))
}

fn expect_len(bytes: &[u8], pixels: usize, size: usize, path: &Path) -> Result<(), FormatError> {
    let want = pixels.checked_mul(size).and_then(|n| n.checked_add(HEADER));
    if want != Some(bytes.len()) {
        return Err(FormatError::invalid(
            path,
            format!("payload is {} bytes, header implies {}", bytes.len() - HEADER, pixels * size),
        ));
    }
    Ok(())
}

fn encode_header(magic: &[u8; 4], width: u32, height: u32, capacity: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + capacity);
    out.extend_from_slice(magic);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out
}

pub fn decode_depth(bytes: &[u8], path: &Path) -> Result<DepthMap, FormatError> {
    let (w, h) = header(bytes, DEPTH_MAGIC, path)?;
    let n = w as usize * h as usize;
    expect_len(bytes, n, 4, path)?;
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DepthMap::new(w, h, data).map_err(|e| FormatError::invalid(path, e.to_string()))
}

pub fn encode_depth(map: &DepthMap) -> Vec<u8> {
    let mut out = encode_header(DEPTH_MAGIC, map.width, map.height, map.data.len() * 4);
    for v in &map.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_mask(bytes: &[u8], path: &Path) -> Result<Mask, FormatError> {
    let (w, h) = header(bytes, MASK_MAGIC, path)?;
    expect_len(bytes, w as usize * h as usize, 1, path)?;
    let data = bytes[HEADER..].iter().map(|b| *b != 0).collect();
    Mask::new(w, h, data).map_err(|e| FormatError::invalid(path, e.to_string()))
}

pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let mut out = encode_header(MASK_MAGIC, mask.width, mask.height, mask.data.len());
    out.extend(mask.data.iter().map(|&b| b as u8));
    out
}

pub fn read_depth(path: &Path) -> Result<DepthMap, FormatError> {
    decode_depth(&read_bytes(path)?, path)
}

pub fn write_depth(path: &Path, map: &DepthMap) -> Result<(), FormatError> {
    write_atomic(path, &encode_depth(map))
}

pub fn read_mask(path: &Path) -> Result<Mask, FormatError> {
    decode_mask(&read_bytes(path)?, path)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<(), FormatError> {
    write_atomic(path, &encode_mask(mask))
}
