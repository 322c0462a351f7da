//! The `qcnn` command line.
//!
//! Exit codes: 0 success, 1 partial data failure, 2 usage, configuration or
//! corruption error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::circuit::{build_quanv_circuit, run_quanv_circuit};
use crate::config::{RunConfig, KEYS, QUANV_KEYS};
use crate::data::cache::{read_cache_dir, write_atomic};
use crate::data::{
    generate_synthetic, load_dataset_dir, read_cache, read_pgm, split, write_dataset_dir, LabelMap,
    SplitSpec,
};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{load_model, save_model};
use crate::nn::{argmax, evaluate, forward, train, EpochMetrics, Metrics, Mode, Sample, Tensor3};
use crate::quanv::{quanvolve_dataset, quanvolve_image, CacheOutcome};
use crate::statevector::circuit_unitary;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Quanvolution settings a cache directory was built with.
pub const CACHE_CONFIG_FILE: &str = "cache.cfg";
pub const MODEL_FILE: &str = "model.qnnw";
pub const METRICS_FILE: &str = "metrics.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const RUN_CONFIG_FILE: &str = "run.cfg";

const UNITARITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "qcnn", version, about = "Quanvolutional preprocessing and CNN training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labelled PGM corpus
    Synth(SynthArgs),
    /// Quanvolve a dataset directory into a feature-map cache
    Preprocess(PreprocessArgs),
    /// Train the CNN head on a cache
    Train(TrainArgs),
    /// Evaluate a checkpoint on a cache
    Eval(EvalArgs),
    /// Class probabilities for one image
    Predict(PredictArgs),
    /// Inspect the quanvolution circuit
    Circuit(CircuitArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// key=value config file; flags override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct QuanvArgs {
    #[arg(long)]
    step: Option<usize>,
    /// Entangling angle: a number, pi, pi/N or PI_OVER_N
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// Number of stacked quanvolution layers
    #[arg(long = "q")]
    depth_q: Option<usize>,
    /// Drop the (3,0) controlled-rotation pair
    #[arg(long)]
    no_cr_ring: bool,
    /// Estimate readouts from this many shots instead of exactly
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    shot_seed: Option<u64>,
    /// Add the SWAP-test pooling stage
    #[arg(long)]
    swap_pool: bool,
    /// HxW or none
    #[arg(long)]
    resize: Option<String>,
    #[arg(long)]
    max_raw: Option<f64>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    cache: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[command(flatten)]
    quanv: QuanvArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "DIR")]
    cache: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    /// sgd or adam
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long = "dropout")]
    dropout_rate: Option<f64>,
    #[arg(long)]
    val_fraction: Option<f64>,
    /// 3 tumour classes, or 4 with no_tumor
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitChoice {
    All,
    Train,
    Val,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "DIR")]
    cache: Option<PathBuf>,
    /// Which part of the seeded train/val split to score
    #[arg(long, value_enum, default_value = "all")]
    split: SplitChoice,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    val_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// A PGM image, or a .qnv cache file
    #[arg(long, value_name = "FILE")]
    image: PathBuf,
    /// Take preprocessing settings from this cache's cache.cfg
    #[arg(long, value_name = "DIR")]
    cache: Option<PathBuf>,
    #[command(flatten)]
    quanv: QuanvArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CircuitAction {
    Dump,
    Unitary,
    Run,
}

#[derive(Debug, Args)]
struct CircuitArgs {
    action: CircuitAction,
    /// Four comma-separated values in [0, 1]
    #[arg(long, default_value = "0,0,0,0", allow_hyphen_values = true)]
    pixels: String,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    #[arg(long)]
    no_cr_ring: bool,
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out` and diagnostics to stderr. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Preprocess(a) => cmd_preprocess(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Circuit(a) => cmd_circuit(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        let _ = writeln!($out, $($arg)*);
    };
}

fn base_config(arg: &ConfigArg) -> Result<RunConfig> {
    match &arg.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
}

fn set_opt<T: ToString>(cfg: &mut RunConfig, key: &str, value: &Option<T>) -> Result<()> {
    match value {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn set_path(cfg: &mut RunConfig, key: &str, value: &Option<PathBuf>) -> Result<()> {
    match value {
        Some(p) => cfg.set(key, &p.display().to_string()),
        None => Ok(()),
    }
}

fn apply_quanv_args(cfg: &mut RunConfig, q: &QuanvArgs) -> Result<()> {
    set_opt(cfg, "step", &q.step)?;
    set_opt(cfg, "theta", &q.theta)?;
    set_opt(cfg, "depth_q", &q.depth_q)?;
    set_opt(cfg, "shots", &q.shots)?;
    set_opt(cfg, "shot_seed", &q.shot_seed)?;
    set_opt(cfg, "resize", &q.resize)?;
    set_opt(cfg, "max_raw", &q.max_raw)?;
    if q.no_cr_ring {
        cfg.cr_ring = false;
    }
    if q.swap_pool {
        cfg.swap_pool = true;
    }
    Ok(())
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("--{flag} is required (or set it in the config file)")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = base_config(&a.config)?;
    set_opt(&mut cfg, "per_class", &a.per_class)?;
    set_opt(&mut cfg, "classes", &a.classes)?;
    set_opt(&mut cfg, "side", &a.side)?;
    set_opt(&mut cfg, "seed", &a.seed)?;
    let dir = a.out.as_deref().or(cfg.data.as_deref()).ok_or_else(|| {
        Error::Config("--out is required (or set data in the config file)".into())
    })?;
    let records = generate_synthetic(cfg.per_class, cfg.side, cfg.classes, cfg.seed)?;
    create_dir(dir)?;
    write_dataset_dir(dir, &records)?;
    say!(out, "wrote {} records to {}", records.len(), dir.display());
    Ok(EXIT_OK)
}

/// Checks `dir/cache.cfg` against `cfg`, writing it when absent.
fn check_cache_fingerprint(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let path = dir.join(CACHE_CONFIG_FILE);
    let ours = cfg.to_text_keys(QUANV_KEYS);
    if path.exists() {
        let stored = RunConfig::load(&path)?;
        let diffs: Vec<String> = QUANV_KEYS
            .iter()
            .filter(|k| stored.get(k) != cfg.get(k))
            .map(|k| format!("{k}: cache {} vs requested {}", stored.get(k).unwrap(), cfg.get(k).unwrap()))
            .collect();
        if !diffs.is_empty() {
            return Err(Error::Config(format!(
                "cache {} was built with different settings ({}); use a fresh cache directory",
                dir.display(),
                diffs.join(", ")
            )));
        }
        return Ok(());
    }
    write_atomic(&path, ours.as_bytes())
}

/// Overlays the settings stored with a cache, if any.
fn overlay_cache_config(cfg: &mut RunConfig, dir: &Path) -> Result<()> {
    let path = dir.join(CACHE_CONFIG_FILE);
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        cfg.merge_text(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_preprocess(a: PreprocessArgs, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = base_config(&a.config)?;
    set_path(&mut cfg, "data", &a.data)?;
    set_path(&mut cfg, "cache", &a.cache)?;
    set_opt(&mut cfg, "classes", &a.classes)?;
    apply_quanv_args(&mut cfg, &a.quanv)?;
    let data = required(&cfg.data, "data")?;
    let cache = required(&cfg.cache, "cache")?;
    let qcfg = cfg.quanv()?;
    let prep = cfg.preprocess()?;
    let labels = LabelMap::for_classes(cfg.classes)?;

    let start = Instant::now();
    let report = load_dataset_dir(data, &labels)?;
    create_dir(cache)?;
    check_cache_fingerprint(cache, &cfg)?;
    let manifest = quanvolve_dataset(&report.records, &qcfg, &prep, cache)?;

    for e in &report.errors {
        eprintln!("error: {} (row {}): {}", e.file, e.row, e.message);
    }
    for e in &manifest.entries {
        if let CacheOutcome::Failed(msg) = &e.outcome {
            eprintln!("error: {} ({}): {msg}", e.id, e.path.display());
        }
    }
    let errored = report.errors.len() + manifest.failed();
    say!(
        out,
        "computed={} skipped={} errored={}",
        manifest.computed(),
        manifest.skipped(),
        errored
    );
    eprintln!("preprocess took {:.2?}", start.elapsed());
    Ok(if errored == 0 { EXIT_OK } else { EXIT_PARTIAL })
}

/// Loads a cache directory as samples, mapping raw labels to class indices.
fn load_samples(dir: &Path, labels: &LabelMap) -> Result<Vec<Sample>> {
    let entries = read_cache_dir(dir)?;
    if entries.is_empty() {
        return Err(Error::Config(format!("no cache files in {}", dir.display())));
    }
    entries
        .into_iter()
        .map(|(path, entry)| {
            let class = labels.index_of(entry.label).ok_or_else(|| {
                Error::Config(format!(
                    "{}: label {} is not one of {:?}",
                    path.display(),
                    entry.label,
                    labels.entries()
                ))
            })?;
            Ok(Sample { map: entry.map, class })
        })
        .collect()
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    config: serde_json::Map<String, serde_json::Value>,
    labels: Vec<&'a str>,
    metrics: &'a Metrics,
}

/// Keys echoed into training outputs. The output directory is left out so
/// that runs differing only in where they write produce identical files.
fn echo_keys() -> Vec<&'static str> {
    KEYS.iter().copied().filter(|k| *k != "out").collect()
}

pub fn curves_csv(epochs: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,train_acc,val_acc\n");
    for e in epochs {
        s.push_str(&format!(
            "{},{:?},{:?},{:?},{:?}\n",
            e.epoch, e.train_loss, e.val_loss, e.train_acc, e.val_acc
        ));
    }
    s
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = base_config(&a.config)?;
    set_path(&mut cfg, "cache", &a.cache)?;
    set_path(&mut cfg, "out", &a.out)?;
    set_opt(&mut cfg, "epochs", &a.epochs)?;
    set_opt(&mut cfg, "seed", &a.seed)?;
    set_opt(&mut cfg, "batch_size", &a.batch_size)?;
    set_opt(&mut cfg, "learning_rate", &a.learning_rate)?;
    set_opt(&mut cfg, "optimizer", &a.optimizer)?;
    set_opt(&mut cfg, "dropout_rate", &a.dropout_rate)?;
    set_opt(&mut cfg, "val_fraction", &a.val_fraction)?;
    set_opt(&mut cfg, "classes", &a.classes)?;
    let cache = required(&cfg.cache, "cache")?.to_path_buf();
    let out_dir = required(&cfg.out, "out")?.to_path_buf();
    overlay_cache_config(&mut cfg, &cache)?;
    let tcfg = cfg.train()?;
    let labels = LabelMap::for_classes(cfg.classes)?;

    let start = Instant::now();
    let samples = load_samples(&cache, &labels)?;
    let (params, metrics) = train(&samples, &tcfg)?;
    eprintln!("training took {:.2?}", start.elapsed());

    create_dir(&out_dir)?;
    save_model(&out_dir.join(MODEL_FILE), &params)?;
    let keys = echo_keys();
    let config = keys
        .iter()
        .map(|k| (k.to_string(), serde_json::Value::String(cfg.get(k).unwrap_or_default())))
        .collect();
    let names = labels.entries().iter().map(|(_, n)| n.as_str()).collect();
    let json = serde_json::to_string_pretty(&MetricsFile { config, labels: names, metrics: &metrics })
        .map_err(|e| Error::Consistency(format!("cannot serialise metrics: {e}")))?;
    write_atomic(&out_dir.join(METRICS_FILE), (json + "\n").as_bytes())?;
    write_atomic(&out_dir.join(CURVES_FILE), curves_csv(&metrics.epochs).as_bytes())?;
    write_atomic(&out_dir.join(CONFUSION_FILE), metrics.confusion.to_csv().as_bytes())?;
    write_atomic(&out_dir.join(RUN_CONFIG_FILE), cfg.to_text_keys(&keys).as_bytes())?;

    for e in &metrics.epochs {
        say!(
            out,
            "epoch {:>3}  train_loss {:.4}  val_loss {:.4}  train_acc {:.4}  val_acc {:.4}",
            e.epoch,
            e.train_loss,
            e.val_loss,
            e.train_acc,
            e.val_acc
        );
    }
    say!(
        out,
        "train={} val={} val_accuracy={:.4} -> {}",
        metrics.train_size,
        metrics.val_size,
        metrics.val_accuracy,
        out_dir.display()
    );
    Ok(EXIT_OK)
}

fn print_confusion(out: &mut dyn Write, labels: &LabelMap, counts: &[Vec<u64>]) {
    let names: Vec<&str> = labels.entries().iter().map(|(_, n)| n.as_str()).collect();
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(8);
    let mut header = format!("{:width$}", "true\\pred");
    for n in &names {
        header.push_str(&format!(" {n:>width$}"));
    }
    say!(out, "{header}");
    for (name, row) in names.iter().zip(counts) {
        let mut line = format!("{name:width$}");
        for c in row {
            line.push_str(&format!(" {c:>width$}"));
        }
        say!(out, "{line}");
    }
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = base_config(&a.config)?;
    set_path(&mut cfg, "cache", &a.cache)?;
    set_opt(&mut cfg, "seed", &a.seed)?;
    set_opt(&mut cfg, "val_fraction", &a.val_fraction)?;
    let cache = required(&cfg.cache, "cache")?;
    let params = load_model(&a.model)?;
    let labels = LabelMap::for_classes(params.arch.num_classes)?;
    let samples = load_samples(cache, &labels)?;
    let chosen = match a.split {
        SplitChoice::All => samples,
        choice => {
            let (tr, va) = split(&samples, &SplitSpec { val_fraction: cfg.val_fraction, seed: cfg.seed })?;
            if choice == SplitChoice::Train { tr } else { va }
        }
    };
    let ev = evaluate(&params, &chosen)?;
    say!(out, "samples={} accuracy={:.4} loss={:.4}", chosen.len(), ev.accuracy, ev.loss);
    print_confusion(out, &labels, &ev.confusion.counts);
    Ok(EXIT_OK)
}

fn cmd_predict(a: PredictArgs, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = base_config(&a.config)?;
    if let Some(dir) = &a.cache {
        overlay_cache_config(&mut cfg, dir)?;
    }
    apply_quanv_args(&mut cfg, &a.quanv)?;
    let params = load_model(&a.model)?;
    let labels = LabelMap::for_classes(params.arch.num_classes)?;
    let is_cache = a.image.extension().is_some_and(|e| e == crate::data::cache::CACHE_EXTENSION);
    let map = if is_cache {
        read_cache(&a.image)?.map
    } else {
        let raw = read_pgm(&a.image)?;
        quanvolve_image(&cfg.preprocess()?.apply(&raw)?, &cfg.quanv()?)?
    };
    let fp = forward(&params, &Tensor3::from(&map), Mode::Eval)?;
    for ((_, name), p) in labels.entries().iter().zip(&fp.probs) {
        say!(out, "{name:<11} {p:.12}");
    }
    let best = argmax(&fp.probs);
    let (_, name) = &labels.entries()[best];
    say!(out, "predicted {name} ({:.4})", fp.probs[best]);
    Ok(EXIT_OK)
}

fn parse_pixels(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Argument(format!("pixel {p:?} is not a number")))
        })
        .collect()
}

fn cmd_circuit(a: CircuitArgs, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = RunConfig::default();
    set_opt(&mut cfg, "theta", &a.theta)?;
    if a.no_cr_ring {
        cfg.cr_ring = false;
    }
    let ccfg = cfg.quanv()?.circuit;
    let pixels = parse_pixels(&a.pixels)?;
    match a.action {
        CircuitAction::Dump => {
            let _ = write!(out, "{}", build_quanv_circuit(&pixels, &ccfg)?);
        }
        CircuitAction::Run => {
            say!(out, "{:?}", run_quanv_circuit(&pixels, &ccfg)?);
        }
        CircuitAction::Unitary => {
            let spec = build_quanv_circuit(&pixels, &ccfg)?;
            let u = circuit_unitary(&spec, ccfg.n_qubits)?;
            for r in 0..u.dim() {
                let row: Vec<String> = (0..u.dim())
                    .map(|c| {
                        let z = u.get(r, c);
                        format!("{:+.6}{:+.6}i", z.re, z.im)
                    })
                    .collect();
                say!(out, "{}", row.join(" "));
            }
            let err = u.unitarity_error();
            let ok = err < UNITARITY_TOLERANCE;
            say!(
                out,
                "unitarity check: max |U^dag U - I| = {err:.3e} ({})",
                if ok { "ok" } else { "FAILED" }
            );
            if !ok {
                return Err(Error::Consistency(format!("unitary deviates by {err:e}")));
            }
        }
    }
    Ok(EXIT_OK)
}
