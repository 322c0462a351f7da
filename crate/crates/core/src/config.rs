//! Flat `key=value` run configuration.
//!
//! Every key has a default, so an empty file resolves to a complete config.
//! Blank lines and `#` comments are ignored; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::circuit::{QuanvCircuitConfig, Readout};
use crate::error::{Error, Result};
use crate::nn::{Optimizer, TrainConfig};
use crate::quanv::{Preprocess, QuanvConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub classes: usize,
    pub per_class: usize,
    pub side: usize,

    pub step: usize,
    pub patch_side: usize,
    pub depth_q: usize,
    pub theta: f64,
    pub cr_ring: bool,
    pub readout_qubit: usize,
    /// 0 = exact expectation.
    pub shots: u64,
    pub shot_seed: u64,
    pub rescale_intermediate: bool,
    pub swap_pool: bool,
    pub resize: Option<(usize, usize)>,
    pub max_raw: f64,

    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub dropout_rate: f64,
    pub val_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let q = QuanvConfig::default();
        let p = Preprocess::default();
        let t = TrainConfig::default();
        Self {
            data: None,
            cache: None,
            out: None,
            seed: t.seed,
            classes: 3,
            per_class: 200,
            side: 28,
            step: q.step,
            patch_side: q.patch_side,
            depth_q: q.depth_q,
            theta: q.circuit.theta,
            cr_ring: q.circuit.cr_ring_closure,
            readout_qubit: q.circuit.readout_qubit,
            shots: 0,
            shot_seed: 0,
            rescale_intermediate: q.rescale_intermediate,
            swap_pool: q.swap_pool,
            resize: p.resize,
            max_raw: p.max_raw,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer,
            dropout_rate: t.dropout_rate,
            val_fraction: t.val_fraction,
        }
    }
}

/// Keys that change cached feature maps.
pub const QUANV_KEYS: &[&str] = &[
    "step",
    "patch_side",
    "depth_q",
    "theta",
    "cr_ring",
    "readout_qubit",
    "shots",
    "shot_seed",
    "rescale_intermediate",
    "swap_pool",
    "resize",
    "max_raw",
];

pub const KEYS: &[&str] = &[
    "data",
    "cache",
    "out",
    "seed",
    "classes",
    "per_class",
    "side",
    "step",
    "patch_side",
    "depth_q",
    "theta",
    "cr_ring",
    "readout_qubit",
    "shots",
    "shot_seed",
    "rescale_intermediate",
    "swap_pool",
    "resize",
    "max_raw",
    "epochs",
    "batch_size",
    "learning_rate",
    "optimizer",
    "dropout_rate",
    "val_fraction",
];

fn parse_as<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

/// Accepts a plain number, `pi`, `pi/N`, `N*pi` or `PI_OVER_N` (case-insensitive).
pub fn parse_angle(value: &str) -> Result<f64> {
    let v = value.trim().to_ascii_lowercase();
    let pi = std::f64::consts::PI;
    let bad = || Error::Config(format!("theta: cannot parse {value:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let theta = if v == "pi" {
        pi
    } else if let Some(d) = v.strip_prefix("pi/").or_else(|| v.strip_prefix("pi_over_")) {
        pi / num(d)?
    } else if let Some(m) = v.strip_suffix("*pi") {
        num(m)? * pi
    } else {
        num(&v)?
    };
    if theta.is_finite() {
        Ok(theta)
    } else {
        Err(bad())
    }
}

fn parse_resize(value: &str) -> Result<Option<(usize, usize)>> {
    if value == "none" {
        return Ok(None);
    }
    let (h, w) = value
        .split_once('x')
        .ok_or_else(|| Error::Config(format!("resize: expected HxW or none, got {value:?}")))?;
    Ok(Some((parse_as("resize", h)?, parse_as("resize", w)?)))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = |v: &str| if v.is_empty() { None } else { Some(PathBuf::from(v)) };
        match key {
            "data" => self.data = path(value),
            "cache" => self.cache = path(value),
            "out" => self.out = path(value),
            "seed" => self.seed = parse_as(key, value)?,
            "classes" => self.classes = parse_as(key, value)?,
            "per_class" => self.per_class = parse_as(key, value)?,
            "side" => self.side = parse_as(key, value)?,
            "step" => self.step = parse_as(key, value)?,
            "patch_side" => self.patch_side = parse_as(key, value)?,
            "depth_q" => self.depth_q = parse_as(key, value)?,
            "theta" => self.theta = parse_angle(value)?,
            "cr_ring" => self.cr_ring = parse_bool(key, value)?,
            "readout_qubit" => self.readout_qubit = parse_as(key, value)?,
            "shots" => self.shots = parse_as(key, value)?,
            "shot_seed" => self.shot_seed = parse_as(key, value)?,
            "rescale_intermediate" => self.rescale_intermediate = parse_bool(key, value)?,
            "swap_pool" => self.swap_pool = parse_bool(key, value)?,
            "resize" => self.resize = parse_resize(value)?,
            "max_raw" => self.max_raw = parse_as(key, value)?,
            "epochs" => self.epochs = parse_as(key, value)?,
            "batch_size" => self.batch_size = parse_as(key, value)?,
            "learning_rate" => self.learning_rate = parse_as(key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "dropout_rate" => self.dropout_rate = parse_as(key, value)?,
            "val_fraction" => self.val_fraction = parse_as(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "data" => path(&self.data),
            "cache" => path(&self.cache),
            "out" => path(&self.out),
            "seed" => self.seed.to_string(),
            "classes" => self.classes.to_string(),
            "per_class" => self.per_class.to_string(),
            "side" => self.side.to_string(),
            "step" => self.step.to_string(),
            "patch_side" => self.patch_side.to_string(),
            "depth_q" => self.depth_q.to_string(),
            "theta" => format!("{:?}", self.theta),
            "cr_ring" => self.cr_ring.to_string(),
            "readout_qubit" => self.readout_qubit.to_string(),
            "shots" => self.shots.to_string(),
            "shot_seed" => self.shot_seed.to_string(),
            "rescale_intermediate" => self.rescale_intermediate.to_string(),
            "swap_pool" => self.swap_pool.to_string(),
            "resize" => match self.resize {
                Some((h, w)) => format!("{h}x{w}"),
                None => "none".into(),
            },
            "max_raw" => format!("{:?}", self.max_raw),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "learning_rate" => format!("{:?}", self.learning_rate),
            "optimizer" => self.optimizer.to_string(),
            "dropout_rate" => format!("{:?}", self.dropout_rate),
            "val_fraction" => format!("{:?}", self.val_fraction),
            _ => return None,
        })
    }

    /// Applies `key=value` lines on top of `self`.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// `key=value` lines for `keys`, in the given order.
    pub fn to_text_keys(&self, keys: &[&str]) -> String {
        let mut s = String::new();
        for key in keys {
            let _ = writeln!(s, "{key}={}", self.get(key).unwrap_or_default());
        }
        s
    }

    pub fn to_text(&self) -> String {
        self.to_text_keys(KEYS)
    }

    pub fn quanv(&self) -> Result<QuanvConfig> {
        let readout = if self.shots == 0 {
            Readout::Exact
        } else {
            Readout::Sampled { shots: self.shots, seed: self.shot_seed }
        };
        let cfg = QuanvConfig {
            step: self.step,
            patch_side: self.patch_side,
            depth_q: self.depth_q,
            circuit: QuanvCircuitConfig {
                n_qubits: self.patch_side * self.patch_side,
                theta: self.theta,
                cr_ring_closure: self.cr_ring,
                readout_qubit: self.readout_qubit,
                readout,
            },
            rescale_intermediate: self.rescale_intermediate,
            swap_pool: self.swap_pool,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preprocess(&self) -> Result<Preprocess> {
        if !(self.max_raw.is_finite() && self.max_raw > 0.0) {
            return Err(Error::Config(format!("max_raw must be positive, got {}", self.max_raw)));
        }
        if let Some((h, w)) = self.resize {
            if h == 0 || w == 0 {
                return Err(Error::Config(format!("resize must be positive, got {h}x{w}")));
            }
        }
        Ok(Preprocess { resize: self.resize, max_raw: self.max_raw })
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            dropout_rate: self.dropout_rate,
            seed: self.seed,
            val_fraction: self.val_fraction,
            num_classes: Some(self.classes),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
