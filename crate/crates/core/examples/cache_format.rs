//! The QNV1 feature-map cache and QNNW checkpoint formats, and what their
//! readers report for damaged files.

use qcnn::data::{decode_cache, encode_cache, CacheEntry};
use qcnn::imageops::ImageTensor;
use qcnn::nn::checkpoint::{decode_model, encode_model};
use qcnn::nn::{weight_init, Architecture};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" ")
}

fn main() -> qcnn::Result<()> {
    let map = ImageTensor::from_fn(14, 14, |r, c| ((r * 14 + c) as f64 * 0.1).sin())?;
    let entry = CacheEntry { map, label: 2, depth_q: 1 };
    let bytes = encode_cache(&entry);
    println!("QNV1: {} bytes", bytes.len());
    println!("  header {}", hex(&bytes[..22]));
    println!("  crc    {}", hex(&bytes[bytes.len() - 4..]));
    let back = decode_cache(&bytes).expect("fresh encoding decodes");
    println!("  round trip bit-exact: {}", back == entry);

    let mut flipped = bytes.clone();
    flipped[100] ^= 0x01;
    println!("  payload bit flip -> {}", decode_cache(&flipped).unwrap_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    println!("  bad magic        -> {}", decode_cache(&magic).unwrap_err());
    println!("  truncated        -> {}", decode_cache(&bytes[..50]).unwrap_err());

    let params = weight_init(Architecture::new(14, 14, 3), 1)?;
    let model = encode_model(&params)?;
    println!("\nQNNW: {} bytes for {} parameters", model.len(), params.param_count());
    println!("  header {}", hex(&model[..22]));
    println!("  round trip exact: {}", decode_model(&model).expect("decodes") == params);
    let mut flipped = model.clone();
    flipped[5000] ^= 0x80;
    println!("  payload bit flip -> {}", decode_model(&flipped).unwrap_err());
    println!("  truncated        -> {}", decode_model(&model[..model.len() - 3]).unwrap_err());
    Ok(())
}
