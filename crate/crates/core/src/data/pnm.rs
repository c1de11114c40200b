//! Binary PPM (P6) images and PGM (P5) masks, 8 bits per sample.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::sample::Mask;
use crate::engine::Tensor;
use crate::error::{shape_err, Error, Result};

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a `(1, 3, h, w)` image in `[0, 1]` (values are clamped).
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let [n, c, h, w] = image.shape();
    if n != 1 || c != 3 {
        return Err(shape_err("ppm", format!("expected (1, 3, h, w), got {:?}", image.shape())));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    let d = image.data();
    out.reserve(3 * plane);
    for i in 0..plane {
        for ch in 0..3 {
            out.push(quantize(d[ch * plane + i]));
        }
    }
    Ok(out)
}

pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.w, mask.h).into_bytes();
    out.extend_from_slice(&mask.data);
    out
}

/// Parses a P5/P6 header; returns `(width, height, payload offset)`.
fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<(usize, usize, usize)> {
    let kind = String::from_utf8_lossy(magic).into_owned();
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::Format(format!("not a binary {kind} file")));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments before each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("malformed {kind} header")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("malformed {kind} header number")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format(format!("malformed {kind} header terminator")));
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("{kind} maxval {maxval} is not 255")));
    }
    Ok((w, h, pos + 1))
}

fn payload<'a>(bytes: &'a [u8], offset: usize, len: usize, kind: &str) -> Result<&'a [u8]> {
    let data = &bytes[offset..];
    if data.len() != len {
        return Err(Error::Format(format!("{kind} payload has {} bytes, expected {len}", data.len())));
    }
    Ok(data)
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let (w, h, off) = parse_header(bytes, b"P6")?;
    let data = payload(bytes, off, 3 * w * h, "P6")?;
    let plane = w * h;
    let mut out = vec![0.0f32; 3 * plane];
    for i in 0..plane {
        for ch in 0..3 {
            out[ch * plane + i] = data[3 * i + ch] as f32 / 255.0;
        }
    }
    Tensor::from_vec([1, 3, h, w], out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Mask> {
    let (w, h, off) = parse_header(bytes, b"P5")?;
    let data = payload(bytes, off, w * h, "P5")?;
    Mask::from_vec(h, w, data.to_vec())
}

pub fn write_ppm(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_ppm(image)?)?;
    Ok(())
}

pub fn write_pgm(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    fs::write(path, encode_pgm(mask))?;
    Ok(())
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_ppm(&fs::read(path)?)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Mask> {
    decode_pgm(&fs::read(path)?)
}
