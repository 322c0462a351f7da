//! Quanvolution: sweep non-overlapping patches of an image through the
//! quantum circuit and collect one Z expectation per patch.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::circuit::{encode_pixel, run_quanv_circuit, swap_test, QuanvCircuitConfig, Readout};
use crate::data::cache::{cache_file_name, read_cache, write_cache, CacheEntry};
use crate::data::DatasetRecord;
use crate::error::{Error, Result};
use crate::imageops::{normalize01, resize_bilinear, ImageTensor};

/// Output of a quanvolution layer; values lie in `[-1, 1]`.
pub type FeatureMap = ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuanvConfig {
    pub step: usize,
    pub patch_side: usize,
    /// Number of stacked quanvolution layers.
    pub depth_q: usize,
    pub circuit: QuanvCircuitConfig,
    /// Map intermediate `[-1, 1]` outputs onto `[0, 1]` via `(v + 1) / 2`
    /// before they are re-encoded by the next layer.
    pub rescale_intermediate: bool,
    /// Follow every layer with SWAP-test pooling of horizontal neighbours.
    pub swap_pool: bool,
}

impl Default for QuanvConfig {
    fn default() -> Self {
        Self {
            step: 2,
            patch_side: 2,
            depth_q: 1,
            circuit: QuanvCircuitConfig::default(),
            rescale_intermediate: true,
            swap_pool: false,
        }
    }
}

impl QuanvConfig {
    pub fn validate(&self) -> Result<()> {
        self.circuit.validate()?;
        if self.patch_side == 0 || self.patch_side * self.patch_side != self.circuit.n_qubits {
            return Err(Error::Config(format!(
                "patch side {} does not match {} qubits",
                self.patch_side, self.circuit.n_qubits
            )));
        }
        if self.step < self.patch_side {
            return Err(Error::Config(format!(
                "step {} smaller than patch side {} (overlapping patches are not supported)",
                self.step, self.patch_side
            )));
        }
        if self.depth_q == 0 {
            return Err(Error::Config("depth_q must be at least 1".into()));
        }
        Ok(())
    }

    /// Map dimensions after every configured layer, or a size error when the
    /// input shrinks below one patch along the way.
    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let (mut h, mut w) = (height, width);
        for layer in 0..self.depth_q {
            if h < self.patch_side || w < self.patch_side {
                return Err(Error::Size(format!(
                    "layer {} input {h}x{w} smaller than {1}x{1} patch",
                    layer + 1,
                    self.patch_side
                )));
            }
            h /= self.step;
            w /= self.step;
            if self.swap_pool {
                if w < 2 {
                    return Err(Error::Size(format!("swap pooling needs width >= 2, got {w}")));
                }
                w /= 2;
            }
        }
        Ok((h, w))
    }
}

/// Row-major flattening of the `side x side` patch whose top-left corner is
/// `(row, col)`.
pub fn extract_patch(image: &ImageTensor, row: usize, col: usize, side: usize) -> Result<Vec<f64>> {
    if side == 0 || row + side > image.height() || col + side > image.width() {
        return Err(Error::Size(format!(
            "{side}x{side} patch at ({row}, {col}) outside {}x{} image",
            image.height(),
            image.width()
        )));
    }
    Ok((row..row + side)
        .flat_map(|r| (col..col + side).map(move |c| image.get(r, c)))
        .collect())
}

/// Readout for the patch at linear index `patch`. Sampled readout gets a
/// distinct, reproducible seed per patch.
fn patch_circuit(config: &QuanvCircuitConfig, patch: usize) -> QuanvCircuitConfig {
    let mut cfg = *config;
    if let Readout::Sampled { shots, seed } = cfg.readout {
        cfg.readout = Readout::Sampled {
            shots,
            seed: seed ^ (patch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        };
    }
    cfg
}

/// One quanvolution layer. Output cells are computed independently (in
/// parallel) and placed by index.
pub fn quanvolve_layer(image: &ImageTensor, config: &QuanvConfig) -> Result<FeatureMap> {
    config.validate()?;
    if let Some(v) = image.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Range(format!("pixel value {v} outside [0, 1]")));
    }
    let (h, w) = image.dims();
    if h < config.patch_side || w < config.patch_side {
        return Err(Error::Size(format!(
            "{h}x{w} image smaller than {0}x{0} patch",
            config.patch_side
        )));
    }
    let (oh, ow) = (h / config.step, w / config.step);
    let values = (0..oh * ow)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / ow, idx % ow);
            let patch = extract_patch(image, i * config.step, j * config.step, config.patch_side)?;
            run_quanv_circuit(&patch, &patch_circuit(&config.circuit, idx))
        })
        .collect::<Result<Vec<f64>>>()?;
    ImageTensor::new(oh, ow, values)
}

/// SWAP-test pooling along rows: values at columns `2k` and `2k+1` are mapped
/// to `[0, 1]`, angle-encoded as single qubits, and replaced by their squared
/// overlap `|<a|b>|^2 = 2 P(0) - 1`. Width halves (floor); height is kept.
pub fn swap_pool(map: &FeatureMap) -> Result<FeatureMap> {
    let (h, w) = map.dims();
    if w < 2 {
        return Err(Error::Size(format!("swap pooling needs width >= 2, got {w}")));
    }
    let ow = w / 2;
    let values = (0..h * ow)
        .into_par_iter()
        .map(|idx| {
            let (i, k) = (idx / ow, idx % ow);
            let enc = |v: f64| encode_pixel(((v + 1.0) / 2.0).clamp(0.0, 1.0));
            let a = enc(map.get(i, 2 * k))?;
            let b = enc(map.get(i, 2 * k + 1))?;
            Ok(2.0 * swap_test(&a, &b, Readout::Exact)? - 1.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    ImageTensor::new(h, ow, values)
}

/// Full transform: `depth_q` quanvolution layers (each optionally followed by
/// SWAP-test pooling). Measurement happens only at each layer's readout.
pub fn quanvolve_image(image: &ImageTensor, config: &QuanvConfig) -> Result<FeatureMap> {
    config.validate()?;
    let mut current = image.clone();
    for layer in 0..config.depth_q {
        let mut map = quanvolve_layer(&current, config)?;
        if config.swap_pool {
            map = swap_pool(&map)?;
        }
        if layer + 1 == config.depth_q {
            return Ok(map);
        }
        current = if config.rescale_intermediate {
            map.map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0))?
        } else {
            map
        };
    }
    unreachable!("depth_q >= 1 is validated")
}

/// Raw-image preparation ahead of quanvolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocess {
    /// Target `(height, width)`; `None` keeps the source size.
    pub resize: Option<(usize, usize)>,
    /// Divisor mapping raw intensities onto `[0, 1]`.
    pub max_raw: f64,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self { resize: Some((28, 28)), max_raw: 255.0 }
    }
}

impl Preprocess {
    /// Normalise, then resize.
    pub fn apply(&self, raw: &ImageTensor) -> Result<ImageTensor> {
        let img = normalize01(raw, self.max_raw)?;
        match self.resize {
            Some((h, w)) if (h, w) != img.dims() => resize_bilinear(&img, h, w),
            _ => Ok(img),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CacheOutcome {
    Computed,
    Skipped,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: u32,
    pub outcome: CacheOutcome,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CacheManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CacheManifest {
    fn count(&self, f: impl Fn(&CacheOutcome) -> bool) -> usize {
        self.entries.iter().filter(|e| f(&e.outcome)).count()
    }

    pub fn computed(&self) -> usize {
        self.count(|o| *o == CacheOutcome::Computed)
    }

    pub fn skipped(&self) -> usize {
        self.count(|o| *o == CacheOutcome::Skipped)
    }

    pub fn failed(&self) -> usize {
        self.count(|o| matches!(o, CacheOutcome::Failed(_)))
    }
}

fn cache_one(
    record: &DatasetRecord,
    path: &Path,
    config: &QuanvConfig,
    prep: &Preprocess,
) -> Result<CacheOutcome> {
    let image = prep.apply(&record.image)?;
    let dims = config.output_dims(image.height(), image.width())?;
    if path.exists() {
        match read_cache(path) {
            Ok(e) if e.map.dims() == dims && e.label == record.label && e.depth_q as usize == config.depth_q => {
                return Ok(CacheOutcome::Skipped);
            }
            Ok(_) => log::warn!("{}: stale cache entry, recomputing", path.display()),
            Err(err) => log::warn!("{}: {err}, recomputing", path.display()),
        }
    }
    let map = quanvolve_image(&image, config)?;
    write_cache(
        path,
        &CacheEntry { map, label: record.label, depth_q: config.depth_q as u32 },
    )?;
    Ok(CacheOutcome::Computed)
}

/// Quanvolves every record into `cache_dir`, skipping records whose cache
/// file already exists and validates. Per-record failures are reported in the
/// manifest; only an unusable configuration or cache directory is fatal.
pub fn quanvolve_dataset(
    records: &[DatasetRecord],
    config: &QuanvConfig,
    prep: &Preprocess,
    cache_dir: &Path,
) -> Result<CacheManifest> {
    config.validate()?;
    std::fs::create_dir_all(cache_dir)
        .map_err(|e| Error::io(cache_dir.display().to_string(), e))?;
    let names: Vec<String> = records.iter().map(|r| cache_file_name(&r.id)).collect();
    let entries = records
        .par_iter()
        .enumerate()
        .map(|(i, record)| {
            let path = cache_dir.join(&names[i]);
            let outcome = if names[..i].contains(&names[i]) {
                CacheOutcome::Failed(format!("cache name {} already used by an earlier record", names[i]))
            } else {
                cache_one(record, &path, config, prep)
                    .unwrap_or_else(|e| CacheOutcome::Failed(e.to_string()))
            };
            ManifestEntry { id: record.id.clone(), path, label: record.label, outcome }
        })
        .collect();
    Ok(CacheManifest { entries })
}
