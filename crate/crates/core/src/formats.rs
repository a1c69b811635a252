//! Binary raster and point formats.
//!
//! * Images: binary PPM (`P6`, maxval 255, row-major).
//! * Depth: `FXDM` little-endian f32 raster with a 16-byte header
//!   (magic, u32 width, u32 height, f32 invalid sentinel = NaN).
//! * LiDAR sweeps: 20-byte records of f32 x, y, z, u32 object id
//!   (0 = static, k + 1 = object k), f32 timestamp.
//! * Primitive blobs: `FXSP`, u32 count, u32 floats per primitive, then f32 rows.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::{DepthMap, ImageBuffer, LidarPoint, Mask};

pub const DEPTH_MAGIC: &[u8; 4] = b"FXDM";
pub const PRIMITIVE_MAGIC: &[u8; 4] = b"FXSP";
pub const LIDAR_RECORD_BYTES: usize = 20;

fn create(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.len() * 3);
    for c in &img.pixels {
        out.extend(c.iter().map(|v| quantize(*v)));
    }
    out
}

pub fn write_ppm(path: &Path, img: &ImageBuffer) -> Result<()> {
    write_all(path, &encode_ppm(img))
}

/// Grayscale rendering of a mask as a PPM (white = valid).
pub fn write_mask_ppm(path: &Path, mask: &Mask) -> Result<()> {
    let img = ImageBuffer {
        width: mask.width,
        height: mask.height,
        pixels: mask
            .valid
            .iter()
            .map(|v| if *v { [1.0; 3] } else { [0.0; 3] })
            .collect(),
    };
    write_ppm(path, &img)
}

fn ppm_token(reader: &mut impl BufRead) -> Result<String> {
    let mut tok = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        if reader.read(&mut byte).map_err(|e| Error::Format(e.to_string()))? == 0 {
            break;
        }
        let b = byte[0];
        if b == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            reader
                .read_until(b'\n', &mut skip)
                .map_err(|e| Error::Format(e.to_string()))?;
            continue;
        }
        if b.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(b);
    }
    String::from_utf8(tok).map_err(|e| Error::Format(e.to_string()))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut reader = BufReader::new(bytes);
    if ppm_token(&mut reader)? != "P6" {
        return Err(Error::Format("not a binary PPM (P6)".into()));
    }
    let parse = |s: String| {
        s.parse::<u32>()
            .map_err(|_| Error::Format(format!("bad PPM header field `{s}`")))
    };
    let width = parse(ppm_token(&mut reader)?)?;
    let height = parse(ppm_token(&mut reader)?)?;
    let maxval = parse(ppm_token(&mut reader)?)?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PPM maxval {maxval}")));
    }
    let n = width as usize * height as usize;
    let mut data = vec![0u8; n * 3];
    reader
        .read_exact(&mut data)
        .map_err(|_| Error::Format("truncated PPM pixel data".into()))?;
    let pixels = data
        .chunks_exact(3)
        .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
        .collect();
    Ok(ImageBuffer {
        width,
        height,
        pixels,
    })
}

pub fn read_ppm(path: &Path) -> Result<ImageBuffer> {
    decode_ppm(&read_all(path)?)
}

pub fn encode_depth(map: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * map.len());
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&map.width.to_le_bytes());
    out.extend_from_slice(&map.height.to_le_bytes());
    out.extend_from_slice(&f32::NAN.to_le_bytes());
    for (d, v) in map.depth.iter().zip(&map.valid) {
        let x = if *v { *d as f32 } else { f32::NAN };
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_depth(bytes: &[u8]) -> Result<DepthMap> {
    if bytes.len() < 16 || &bytes[0..4] != DEPTH_MAGIC {
        return Err(Error::Format("missing FXDM header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let (width, height) = (u32_at(4), u32_at(8));
    let n = width as usize * height as usize;
    if bytes.len() != 16 + 4 * n {
        return Err(Error::Format(format!(
            "FXDM payload is {} bytes, expected {}",
            bytes.len() - 16,
            4 * n
        )));
    }
    let mut map = DepthMap::invalid(width, height);
    for (i, chunk) in bytes[16..].chunks_exact(4).enumerate() {
        let d = f32::from_le_bytes(chunk.try_into().unwrap());
        map.set_index(i, d as f64);
    }
    Ok(map)
}

pub fn write_depth(path: &Path, map: &DepthMap) -> Result<()> {
    write_all(path, &encode_depth(map))
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    decode_depth(&read_all(path)?)
}

/// LiDAR sweep records; every point carries the sweep timestamp.
pub fn encode_lidar(points: &[LidarPoint], timestamp: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * LIDAR_RECORD_BYTES);
    for p in points {
        for c in p.position.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        let id = p.object.map_or(0u32, |k| k as u32 + 1);
        out.extend_from_slice(&id.to_le_bytes());
        out.extend_from_slice(&(timestamp as f32).to_le_bytes());
    }
    out
}

/// Decodes LiDAR records into points and their per-point timestamps.
pub fn decode_lidar(bytes: &[u8]) -> Result<(Vec<LidarPoint>, Vec<f64>)> {
    if bytes.len() % LIDAR_RECORD_BYTES != 0 {
        return Err(Error::Format(format!(
            "LiDAR file length {} is not a multiple of {LIDAR_RECORD_BYTES}",
            bytes.len()
        )));
    }
    let f = |b: &[u8]| f32::from_le_bytes(b.try_into().unwrap()) as f64;
    let mut points = Vec::with_capacity(bytes.len() / LIDAR_RECORD_BYTES);
    let mut stamps = Vec::with_capacity(points.capacity());
    for r in bytes.chunks_exact(LIDAR_RECORD_BYTES) {
        let id = u32::from_le_bytes(r[12..16].try_into().unwrap());
        points.push(LidarPoint {
            position: Vec3::new(f(&r[0..4]), f(&r[4..8]), f(&r[8..12])),
            object: id.checked_sub(1).map(|k| k as usize),
        });
        stamps.push(f(&r[16..20]));
    }
    Ok((points, stamps))
}

pub fn write_lidar(path: &Path, points: &[LidarPoint], timestamp: f64) -> Result<()> {
    write_all(path, &encode_lidar(points, timestamp))
}

pub fn read_lidar(path: &Path) -> Result<(Vec<LidarPoint>, Vec<f64>)> {
    decode_lidar(&read_all(path)?)
}

/// Primitive parameter blob.
pub fn encode_primitive_blob(rows: &[f32], floats_per_primitive: usize) -> Vec<u8> {
    let count = if floats_per_primitive == 0 {
        0
    } else {
        rows.len() / floats_per_primitive
    };
    let mut out = Vec::with_capacity(12 + 4 * rows.len());
    out.extend_from_slice(PRIMITIVE_MAGIC);
    out.extend_from_slice(&(count as u32).to_le_bytes());
    out.extend_from_slice(&(floats_per_primitive as u32).to_le_bytes());
    for v in rows {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Returns (rows, floats per primitive).
pub fn decode_primitive_blob(bytes: &[u8]) -> Result<(Vec<f32>, usize)> {
    if bytes.len() < 12 || &bytes[0..4] != PRIMITIVE_MAGIC {
        return Err(Error::Format("missing FXSP header".into()));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let fpp = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() != 12 + 4 * count * fpp {
        return Err(Error::Format(format!(
            "FXSP payload holds {} bytes, header announces {count}×{fpp} floats",
            bytes.len() - 12
        )));
    }
    let rows = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, fpp))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_roundtrip_quantized() {
        let mut img = ImageBuffer::new(3, 2);
        img.set(1, 1, [1.0, 0.5, 0.0]);
        img.set(2, 0, [0.2, 0.4, 0.6]);
        let bytes = encode_ppm(&img);
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        let back = decode_ppm(&bytes).unwrap();
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn depth_header_layout() {
        let mut d = DepthMap::invalid(2, 2);
        d.set(0, 0, 3.5);
        d.set(1, 1, 10.25);
        let bytes = encode_depth(&d);
        assert_eq!(bytes.len(), 16 + 16);
        assert_eq!(&bytes[0..4], b"FXDM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert!(f32::from_le_bytes(bytes[12..16].try_into().unwrap()).is_nan());
        assert_eq!(decode_depth(&bytes).unwrap(), d);
    }

    #[test]
    fn lidar_records() {
        let pts = vec![
            LidarPoint { position: Vec3::new(1.0, 2.0, 3.0), object: None },
            LidarPoint { position: Vec3::new(-1.5, 0.25, 0.5), object: Some(3) },
        ];
        let bytes = encode_lidar(&pts, 0.5);
        assert_eq!(bytes.len(), 40);
        assert_eq!(u32::from_le_bytes(bytes[32..36].try_into().unwrap()), 4);
        let (back, stamps) = decode_lidar(&bytes).unwrap();
        assert_eq!(back, pts);
        assert_eq!(stamps, vec![0.5, 0.5]);
        assert!(decode_lidar(&bytes[..30]).is_err());
    }

    #[test]
    fn blob_rejects_truncation() {
        let bytes = encode_primitive_blob(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(decode_primitive_blob(&bytes).unwrap(), (vec![1.0, 2.0, 3.0, 4.0], 2));
        assert!(decode_primitive_blob(&bytes[..bytes.len() - 1]).is_err());
    }
}
