//! `QNV1` cache files holding one quanvolved feature map and its label.
//!
//! Layout (little-endian):
//!
//! ```text
//! "QNV1" | u16 version = 1 | u32 height | u32 width | u32 label | u32 depth_q
//!        | f64 x (height * width), row-major | u32 CRC32 of all preceding bytes
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, FormatError, Result};
use crate::imageops::ImageTensor;

pub const CACHE_MAGIC: [u8; 4] = *b"QNV1";
pub const CACHE_VERSION: u16 = 1;
pub const CACHE_EXTENSION: &str = "qnv";

const HEADER_LEN: usize = 4 + 2 + 4 * 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub map: ImageTensor,
    pub label: u32,
    pub depth_q: u32,
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, field: &'static str) -> std::result::Result<&'a [u8], FormatError> {
        let slice = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or(FormatError::Truncated(field))?;
        self.pos += n;
        Ok(slice)
    }

    pub(crate) fn u16(&mut self, field: &'static str) -> std::result::Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, field: &'static str) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize, field: &'static str) -> std::result::Result<Vec<f64>, FormatError> {
        let raw = self.take(n.checked_mul(8).ok_or(FormatError::Truncated(field))?, field)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> std::result::Result<(), FormatError> {
        let found = self.take(4, "magic")?;
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(&expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    /// Verifies the trailing CRC32 over everything read so far and that no
    /// bytes follow it.
    pub(crate) fn finish_with_crc(mut self) -> std::result::Result<(), FormatError> {
        let body_end = self.pos;
        let stored = self.u32("crc32")?;
        if self.pos != self.bytes.len() {
            return Err(FormatError::TrailingBytes(self.bytes.len() - self.pos));
        }
        let computed = crc32fast::hash(&self.bytes[..body_end]);
        if stored != computed {
            return Err(FormatError::BadCrc { stored, computed });
        }
        Ok(())
    }
}

pub(crate) fn append_crc(mut bytes: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    bytes
}

pub fn encode_cache(entry: &CacheEntry) -> Vec<u8> {
    let (h, w) = entry.map.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * h * w + 4);
    out.extend_from_slice(&CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    for v in [h as u32, w as u32, entry.label, entry.depth_q] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in entry.map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    append_crc(out)
}

/// Decodes and validates a cache file image. The header is checked field by
/// field before the CRC so that the error names the first bad field.
pub fn decode_cache(bytes: &[u8]) -> std::result::Result<CacheEntry, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(CACHE_MAGIC)?;
    let version = r.u16("version")?;
    if version != CACHE_VERSION {
        return Err(FormatError::BadVersion(version));
    }
    let height = r.u32("height")? as usize;
    let width = r.u32("width")? as usize;
    let label = r.u32("label")?;
    let depth_q = r.u32("depth_q")?;
    if height == 0 || width == 0 {
        return Err(FormatError::BadField {
            field: "dims",
            detail: format!("{height}x{width}"),
        });
    }
    if depth_q == 0 {
        return Err(FormatError::BadField { field: "depth_q", detail: "0".into() });
    }
    let n = height.checked_mul(width).ok_or(FormatError::BadField {
        field: "dims",
        detail: format!("{height}x{width} overflows"),
    })?;
    let values = r.f64s(n, "values")?;
    r.finish_with_crc()?;
    let map = ImageTensor::new(height, width, values).map_err(|e| FormatError::BadField {
        field: "values",
        detail: e.to_string(),
    })?;
    Ok(CacheEntry { map, label, depth_q })
}

pub fn read_cache(path: &Path) -> Result<CacheEntry> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(decode_cache(&bytes)?)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`, so a
/// reader never sees a half-written file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let ctx = || path.display().to_string();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Argument(format!("{} has no file name", ctx())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(tmp.display().to_string(), e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(ctx(), e))
}

pub fn write_cache(path: &Path, entry: &CacheEntry) -> Result<()> {
    write_atomic(path, &encode_cache(entry))
}

/// File name used for a record id. Characters outside `[A-Za-z0-9._-]` are
/// replaced by `_`.
pub fn cache_file_name(id: &str) -> String {
    let stem: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    format!("{stem}.{CACHE_EXTENSION}")
}

/// Every `*.qnv` file in `dir`, sorted by file name.
pub fn list_cache_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir.display().to_string(), e))?.path();
        if path.extension().is_some_and(|e| e == CACHE_EXTENSION) && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every cache file in `dir`. Any unreadable or corrupt file aborts
/// the load with an error naming it.
pub fn read_cache_dir(dir: &Path) -> Result<Vec<(PathBuf, CacheEntry)>> {
    list_cache_files(dir)?
        .into_iter()
        .map(|path| match read_cache(&path) {
            Ok(entry) => Ok((path, entry)),
            Err(Error::Format(f)) => Err(Error::Config(format!("{}: {f}", path.display()))),
            Err(e) => Err(e),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CacheEntry {
        let map = ImageTensor::from_fn(3, 2, |r, c| (r as f64 - c as f64) / 3.0).unwrap();
        CacheEntry { map, label: 2, depth_q: 1 }
    }

    #[test]
    fn layout_is_bit_exact() {
        let bytes = encode_cache(&sample());
        assert_eq!(&bytes[..4], b"QNV1");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[3, 0, 0, 0]);
        assert_eq!(&bytes[10..14], &[2, 0, 0, 0]);
        assert_eq!(&bytes[14..18], &[2, 0, 0, 0]);
        assert_eq!(&bytes[18..22], &[1, 0, 0, 0]);
        assert_eq!(bytes.len(), 22 + 6 * 8 + 4);
        let crc = crc32fast::hash(&bytes[..bytes.len() - 4]);
        assert_eq!(&bytes[bytes.len() - 4..], &crc.to_le_bytes());
        assert_eq!(decode_cache(&bytes).unwrap(), sample());
    }

    #[test]
    fn corruption_is_reported() {
        let good = encode_cache(&sample());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_cache(&bad), Err(FormatError::BadMagic { .. })));
        let mut bad = good.clone();
        bad[4] = 9;
        assert_eq!(decode_cache(&bad), Err(FormatError::BadVersion(9)));
        let mut bad = good.clone();
        bad[30] ^= 0x40;
        assert!(matches!(decode_cache(&bad), Err(FormatError::BadCrc { .. })));
        assert_eq!(decode_cache(&good[..8]), Err(FormatError::Truncated("height")));
        assert_eq!(decode_cache(&good[..40]), Err(FormatError::Truncated("values")));
        assert_eq!(
            decode_cache(&good[..good.len() - 1]),
            Err(FormatError::Truncated("crc32"))
        );
        let mut long = good.clone();
        long.push(0);
        assert_eq!(decode_cache(&long), Err(FormatError::TrailingBytes(1)));
        assert!(decode_cache(&[]).is_err());
    }

    #[test]
    fn file_names_are_sanitised() {
        assert_eq!(cache_file_name("img_001"), "img_001.qnv");
        assert_eq!(cache_file_name("a/b c"), "a_b_c.qnv");
    }
}
