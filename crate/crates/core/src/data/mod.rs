//! Dataset records, label coding, directory ingestion and train/validation
//! splitting.
//!
//! A dataset directory holds `labels.csv` (header `filename,label,id`) next to
//! 8-bit binary PGM images.

pub mod cache;
pub mod pgm;
pub mod synth;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::ImageTensor;

pub use cache::{decode_cache, encode_cache, read_cache, write_cache, CacheEntry};
pub use pgm::{read_pgm, write_pgm};
pub use synth::generate_synthetic;

pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    /// Raw intensities, not yet normalised.
    pub image: ImageTensor,
    pub label: u32,
}

/// Anything that carries an integer class code.
pub trait Labeled {
    fn label(&self) -> u32;
}

impl Labeled for DatasetRecord {
    fn label(&self) -> u32 {
        self.label
    }
}

impl Labeled for CacheEntry {
    fn label(&self) -> u32 {
        self.label
    }
}

impl<T> Labeled for (T, u32) {
    fn label(&self) -> u32 {
        self.1
    }
}

/// Ordered mapping from integer label codes to class names. The position of a
/// code in the map is its class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    entries: Vec<(u32, String)>,
}

impl Default for LabelMap {
    /// The tumour coding: 1 meningioma, 2 glioma, 3 pituitary.
    fn default() -> Self {
        Self::for_classes(3).expect("three-class map")
    }
}

impl LabelMap {
    pub fn new(entries: Vec<(u32, String)>) -> Result<Self> {
        for (i, (code, name)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(c, n)| c == code || n == name) {
                return Err(Error::Config(format!("duplicate label {code} / {name:?}")));
            }
        }
        if entries.is_empty() {
            return Err(Error::Config("empty label map".into()));
        }
        Ok(Self { entries })
    }

    /// The three tumour classes, plus `4: no_tumor` when `classes == 4`.
    pub fn for_classes(classes: usize) -> Result<Self> {
        let mut entries = vec![
            (1, "meningioma".to_string()),
            (2, "glioma".to_string()),
            (3, "pituitary".to_string()),
        ];
        match classes {
            3 => {}
            4 => entries.push((4, "no_tumor".to_string())),
            n => return Err(Error::Config(format!("class count must be 3 or 4, got {n}"))),
        }
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, code: u32) -> Option<usize> {
        self.entries.iter().position(|(c, _)| *c == code)
    }

    pub fn code_at(&self, index: usize) -> Option<u32> {
        self.entries.get(index).map(|(c, _)| *c)
    }

    pub fn name_of(&self, code: u32) -> Option<&str> {
        self.entries.iter().find(|(c, _)| *c == code).map(|(_, n)| n.as_str())
    }

    pub fn entries(&self) -> &[(u32, String)] {
        &self.entries
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    filename: String,
    label: String,
    id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordError {
    /// 1-based data row in `labels.csv`.
    pub row: usize,
    pub file: String,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub records: Vec<DatasetRecord>,
    pub errors: Vec<RecordError>,
}

/// Loads every row of `dir/labels.csv`. Rows that fail (missing file, bad
/// image, unknown label) are collected in [`LoadReport::errors`] and do not
/// stop the load; a missing or malformed `labels.csv` does.
pub fn load_dataset_dir(dir: &Path, labels: &LabelMap) -> Result<LoadReport> {
    let csv_path = dir.join(LABELS_FILE);
    let file = std::fs::File::open(&csv_path)
        .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["filename", "label", "id"] {
        return Err(Error::Config(format!(
            "{} header must be filename,label,id, found {}",
            csv_path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut report = LoadReport::default();
    for (i, row) in reader.deserialize::<LabelRow>().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(RecordError {
                    row: row_no,
                    file: String::new(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let fail = |message: String| RecordError {
            row: row_no,
            file: row.filename.clone(),
            message,
        };
        let label = match row.label.trim().parse::<u32>() {
            Ok(code) if labels.index_of(code).is_some() => code,
            Ok(code) => {
                report.errors.push(fail(format!("unknown label code {code}")));
                continue;
            }
            Err(_) => {
                report.errors.push(fail(format!("label {:?} is not an integer", row.label)));
                continue;
            }
        };
        match pgm::read_pgm(&dir.join(&row.filename)) {
            Ok(image) => report.records.push(DatasetRecord { id: row.id, image, label }),
            Err(e) => report.errors.push(fail(e.to_string())),
        }
    }
    Ok(report)
}

/// Writes `records` as `<id>.pgm` files plus `labels.csv`. Returns the image
/// paths in record order.
pub fn write_dataset_dir(dir: &Path, records: &[DatasetRecord]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let csv_path = dir.join(LABELS_FILE);
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&csv_path)?;
    let mut paths = Vec::with_capacity(records.len());
    for rec in records {
        let filename = format!("{}.pgm", rec.id);
        let path = dir.join(&filename);
        pgm::write_pgm(&path, &rec.image)?;
        writer.serialize(LabelRow {
            filename,
            label: rec.label.to_string(),
            id: rec.id.clone(),
        })?;
        paths.push(path);
    }
    writer
        .flush()
        .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub val_fraction: f64,
    pub seed: u64,
}

/// Per-class validation quotas summing to `total`, allotted by largest
/// remainder (ties to the lower label).
fn stratified_quotas(counts: &BTreeMap<u32, usize>, fraction: f64, total: usize) -> BTreeMap<u32, usize> {
    let mut quotas: BTreeMap<u32, usize> = counts
        .iter()
        .map(|(&l, &n)| (l, (n as f64 * fraction).floor() as usize))
        .collect();
    let mut assigned: usize = quotas.values().sum();
    let mut order: Vec<(u32, f64)> = counts
        .iter()
        .map(|(&l, &n)| (l, n as f64 * fraction - (n as f64 * fraction).floor()))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    while assigned < total {
        let before = assigned;
        for &(label, _) in &order {
            if assigned == total {
                break;
            }
            if quotas[&label] < counts[&label] {
                *quotas.get_mut(&label).unwrap() += 1;
                assigned += 1;
            }
        }
        if before == assigned {
            break;
        }
    }
    while assigned > total {
        let label = *quotas.iter().max_by_key(|(_, q)| **q).unwrap().0;
        *quotas.get_mut(&label).unwrap() -= 1;
        assigned -= 1;
    }
    quotas
}

/// Seeded stratified split into `(train, validation)`. The validation side
/// holds `round(val_fraction * N)` items (clamped so neither side is empty)
/// and every class contributes within one item of its exact share.
pub fn split<T: Labeled + Clone>(items: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    if !(spec.val_fraction > 0.0 && spec.val_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "val_fraction must be in (0, 1), got {}",
            spec.val_fraction
        )));
    }
    if items.len() < 2 {
        return Err(Error::Size(format!("cannot split {} item(s)", items.len())));
    }
    let n = items.len();
    let n_val = ((spec.val_fraction * n as f64).round() as usize).clamp(1, n - 1);

    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_class.entry(item.label()).or_default().push(i);
    }
    let counts = by_class.iter().map(|(&l, v)| (l, v.len())).collect();
    let quotas = stratified_quotas(&counts, spec.val_fraction, n_val);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::with_capacity(n - n_val);
    let mut val = Vec::with_capacity(n_val);
    for (label, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let q = quotas[&label];
        val.extend_from_slice(&idx[..q]);
        train.extend_from_slice(&idx[q..]);
    }
    train.shuffle(&mut rng);
    val.shuffle(&mut rng);
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| items[i].clone()).collect();
    Ok((pick(train), pick(val)))
}
