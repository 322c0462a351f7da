//! Binary greyscale PGM (`P5`).

use std::path::Path;

use crate::error::{Error, Result};
use crate::imageops::ImageTensor;

/// Decodes a `P5` image. Samples are returned as raw integers in
/// `[0, maxval]`; 16-bit files (maxval > 255) are read big-endian.
pub fn decode_pgm(bytes: &[u8]) -> Result<(ImageTensor, u16)> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Decode("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or(""));
    }
    if fields[0] != "P5" {
        return Err(Error::Decode(format!("expected P5 magic, found {:?}", fields[0])));
    }
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Decode(format!("bad PGM {what} {s:?}")))
    };
    let width = num(fields[1], "width")?;
    let height = num(fields[2], "height")?;
    let maxval = num(fields[3], "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Decode(format!("empty PGM {width}x{height}")));
    }
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(Error::Decode(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Decode("missing raster separator".into()));
    }
    pos += 1;
    let sample_bytes = if maxval > 255 { 2 } else { 1 };
    let needed = width * height * sample_bytes;
    let raster = bytes
        .get(pos..pos + needed)
        .ok_or_else(|| Error::Decode(format!("raster truncated: need {needed} bytes")))?;
    let values: Vec<f64> = if sample_bytes == 1 {
        raster.iter().map(|&b| f64::from(b)).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])))
            .collect()
    };
    if let Some(v) = values.iter().find(|&&v| v > maxval as f64) {
        return Err(Error::Decode(format!("sample {v} exceeds maxval {maxval}")));
    }
    Ok((ImageTensor::new(height, width, values)?, maxval as u16))
}

/// Encodes an 8-bit `P5` image (maxval 255). Values are rounded and must lie
/// in `[0, 255]`.
pub fn encode_pgm(image: &ImageTensor) -> Result<Vec<u8>> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    for &v in image.values() {
        let r = v.round();
        if !(0.0..=255.0).contains(&r) {
            return Err(Error::Range(format!("pixel {v} does not fit 8 bits")));
        }
        out.push(r as u8);
    }
    Ok(out)
}

pub fn read_pgm(path: &Path) -> Result<ImageTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(decode_pgm(&bytes)?.0)
}

pub fn write_pgm(path: &Path, image: &ImageTensor) -> Result<()> {
    let bytes = encode_pgm(image)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}
