//! `QNNW` model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "QNNW" | u16 version = 1 | u32 num_classes | u32 input_h | u32 input_w
//!        | u32 layer_count = 4
//!        | per layer: u32 kind (1 = conv, 2 = dense) | u32 outputs | u32 inputs
//!                     | u32 kernel_h | u32 kernel_w        (dense: 1, 1)
//!        | f64 values: conv1.weights conv1.bias conv2.weights conv2.bias
//!                      dense1.weights dense1.bias dense2.weights dense2.bias
//!        | u32 CRC32 of all preceding bytes
//! ```
//!
//! Weights are stored in their in-memory order: conv `[out][in][kh][kw]`,
//! dense `[out][in]`.

use std::path::Path;

use super::{Architecture, ModelParams};
use crate::data::cache::{append_crc, write_atomic, Reader};
use crate::error::{Error, FormatError, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"QNNW";
pub const MODEL_VERSION: u16 = 1;

const KIND_CONV: u32 = 1;
const KIND_DENSE: u32 = 2;
const LAYER_COUNT: u32 = 4;

type LayerHeader = [u32; 5];

fn layer_headers(arch: &Architecture, flatten: usize) -> [LayerHeader; 4] {
    let k = arch.kernel as u32;
    [
        [KIND_CONV, arch.conv1_filters as u32, 1, k, k],
        [KIND_CONV, arch.conv2_filters as u32, arch.conv1_filters as u32, k, k],
        [KIND_DENSE, arch.hidden as u32, flatten as u32, 1, 1],
        [KIND_DENSE, arch.num_classes as u32, arch.hidden as u32, 1, 1],
    ]
}

pub fn encode_model(params: &ModelParams) -> Result<Vec<u8>> {
    let arch = &params.arch;
    let mut out = Vec::with_capacity(64 + 8 * params.param_count());
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for v in [arch.num_classes, arch.input_h, arch.input_w] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&LAYER_COUNT.to_le_bytes());
    for header in layer_headers(arch, arch.flatten_len()?) {
        for v in header {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for group in params.groups() {
        for v in group {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(append_crc(out))
}

fn bad(field: &'static str, detail: impl Into<String>) -> FormatError {
    FormatError::BadField { field, detail: detail.into() }
}

pub fn decode_model(bytes: &[u8]) -> std::result::Result<ModelParams, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let version = r.u16("version")?;
    if version != MODEL_VERSION {
        return Err(FormatError::BadVersion(version));
    }
    let num_classes = r.u32("num_classes")? as usize;
    let input_h = r.u32("input_h")? as usize;
    let input_w = r.u32("input_w")? as usize;
    let count = r.u32("layer_count")?;
    if count != LAYER_COUNT {
        return Err(bad("layer_count", format!("expected {LAYER_COUNT}, found {count}")));
    }
    let mut headers = [[0u32; 5]; 4];
    for h in headers.iter_mut() {
        for v in h.iter_mut() {
            *v = r.u32("layer header")?;
        }
    }
    let arch = Architecture {
        input_h,
        input_w,
        num_classes,
        conv1_filters: headers[0][1] as usize,
        conv2_filters: headers[1][1] as usize,
        kernel: headers[0][3] as usize,
        hidden: headers[2][1] as usize,
    };
    arch.validate().map_err(|e| bad("architecture", e.to_string()))?;
    let flatten = arch.flatten_len().map_err(|e| bad("architecture", e.to_string()))?;
    let expected = layer_headers(&arch, flatten);
    if headers != expected {
        return Err(bad(
            "layer header",
            format!("found {headers:?}, inconsistent with {expected:?}"),
        ));
    }
    let mut params = ModelParams::zeros(arch).map_err(|e| bad("architecture", e.to_string()))?;
    for group in params.groups_mut() {
        let values = r.f64s(group.len(), "weights")?;
        group.copy_from_slice(&values);
    }
    r.finish_with_crc()?;
    if params.groups().iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(bad("weights", "non-finite value"));
    }
    Ok(params)
}

pub fn save_model(path: &Path, params: &ModelParams) -> Result<()> {
    write_atomic(path, &encode_model(params)?)
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(decode_model(&bytes)?)
}
