//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use qcnn::circuit::{build_quanv_circuit, run_quanv_circuit, swap_test, QuanvCircuitConfig, Readout};
use qcnn::data::cache::{decode_cache, encode_cache};
use qcnn::data::CacheEntry;
use qcnn::imageops::{avg_pool, conv2d_valid, l2_pool, max_pool, pad, ImageTensor};
use qcnn::nn::checkpoint::{decode_model, encode_model};
use qcnn::nn::gradcheck::{check_gradients, GradCheckConfig};
use qcnn::nn::{weight_init, Architecture, Tensor3};
use qcnn::quanv::{quanvolve_dataset, quanvolve_image, Preprocess, QuanvConfig};
use qcnn::statevector::{
    circuit_unitary, gate_crx, gate_crz, gate_cswap, gate_cz, gate_hadamard, gate_rx, GateMatrix, StateVector,
};
use qcnn::FormatError;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn gate_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let id4 = GateMatrix::identity(4);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let t = rng.gen_range(-20.0..20.0);
        for g in [gate_rx(t).unwrap(), gate_crz(t).unwrap(), gate_crx(t).unwrap()] {
            worst = worst.max(g.unitarity_error());
        }
        let crz = gate_crz(t).unwrap().matmul(&gate_crz(-t).unwrap()).unwrap();
        let crx = gate_crx(t).unwrap().matmul(&gate_crx(-t).unwrap()).unwrap();
        worst = worst.max(crz.max_abs_diff(&id4)).max(crx.max_abs_diff(&id4));
    }
    for g in [gate_hadamard(), gate_cz(), gate_cswap()] {
        worst = worst.max(g.unitarity_error());
        worst = worst.max(g.matmul(&g).unwrap().max_abs_diff(&GateMatrix::identity(g.dim())));
    }
    ensure!(worst < 1e-12, "max deviation {worst:e}");
    Ok(format!("max deviation {worst:.1e}"))
}

fn simulator_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.gen_range(0..=20);
        let spec = random_circuit(4, len, &mut rng);
        let start = random_state(4, &mut rng);
        let mut psi = start.clone();
        spec.apply_to(&mut psi).unwrap();
        let lib = circuit_unitary(&spec, 4).unwrap().apply_to(start.amplitudes()).unwrap();
        let independent = matvec(&circuit_matrix(&spec), start.amplitudes());
        worst = worst.max(max_diff(psi.amplitudes(), &lib)).max(max_diff(psi.amplitudes(), &independent));
    }
    ensure!(worst < 1e-10, "max amplitude error {worst:e}");
    Ok(format!("100 circuits, max amplitude error {worst:.1e}"))
}

fn circuit_ground_truths() -> Outcome {
    let cfg = QuanvCircuitConfig::default();
    let zero = run_quanv_circuit(&[0.0; 4], &cfg).unwrap();
    ensure!(zero == 1.0, "zero patch gave {zero:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shots = 100_000u64;
    let mut worst_sigmas: f64 = 0.0;
    for k in 0..20 {
        let patch: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let exact = run_quanv_circuit(&patch, &cfg).unwrap();
        let sampled_cfg = QuanvCircuitConfig { readout: Readout::Sampled { shots, seed: 100 + k }, ..cfg };
        let sampled = run_quanv_circuit(&patch, &sampled_cfg).unwrap();
        let p0 = (1.0 + exact) / 2.0;
        let sigma = 2.0 * (p0 * (1.0 - p0) / shots as f64).sqrt();
        let dev = (sampled - exact).abs();
        ensure!(dev <= 3.0 * sigma + 1e-12, "patch {k}: |{sampled} - {exact}| > 3 sigma ({sigma:e})");
        if sigma > 0.0 {
            worst_sigmas = worst_sigmas.max(dev / sigma);
        }
    }
    Ok(format!("zero patch = 1.0, 20 patches within {worst_sigmas:.2} sigma"))
}

fn swap_test_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = 1 + i % 3;
        let a = random_state(n, &mut rng);
        let b = random_state(n, &mut rng);
        let law = (1.0 + a.inner_product(&b).unwrap().norm_sqr()) / 2.0;
        worst = worst.max((swap_test(&a, &b, Readout::Exact).unwrap() - law).abs());
    }
    ensure!(worst < 1e-12, "max error {worst:e}");
    let zero = StateVector::zero(1).unwrap();
    let one = StateVector::basis(1, 1).unwrap();
    let h = 0.5f64.sqrt();
    let plus = StateVector::from_amplitudes(vec![Complex64::new(h, 0.0); 2]).unwrap();
    let points = [
        swap_test(&zero, &zero, Readout::Exact).unwrap(),
        swap_test(&zero, &one, Readout::Exact).unwrap(),
        swap_test(&zero, &plus, Readout::Exact).unwrap(),
    ];
    ensure!(points == [1.0, 0.5, 0.75], "analytic points gave {points:?}");
    Ok(format!("1000 pairs, max error {worst:.1e}; points {points:?}"))
}

fn classical_ops() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let int_image =
        |h: usize, w: usize, rng: &mut ChaCha8Rng| ImageTensor::from_fn(h, w, |_, _| rng.gen_range(-8i32..=8) as f64).unwrap();
    for i in 0..200 {
        let (h, w) = (rng.gen_range(3..12), rng.gen_range(3..12));
        let img = int_image(h, w, &mut rng);
        let kern = int_image(rng.gen_range(1..=h.min(4)), rng.gen_range(1..=w.min(4)), &mut rng);
        ensure!(rows(&conv2d_valid(&img, &kern).unwrap()) == naive_conv(&img, &kern), "conv instance {i}");
        let window = rng.gen_range(1..=h.min(w).min(3));
        let stride = rng.gen_range(1..=3);
        ensure!(rows(&max_pool(&img, window, stride).unwrap()) == naive_pool(&img, window, stride, Pool::Max), "max pool {i}");
        ensure!(rows(&avg_pool(&img, window, stride).unwrap()) == naive_pool(&img, window, stride, Pool::Avg), "avg pool {i}");
        ensure!(rows(&l2_pool(&img, window, stride).unwrap()) == naive_pool(&img, window, stride, Pool::L2), "l2 pool {i}");
    }
    for k in [1, 3, 5, 7] {
        let img = random_image(rng.gen_range(1..10), rng.gen_range(1..10), &mut rng);
        let kern = random_image(k, k, &mut rng);
        let out = conv2d_valid(&pad(&img, (k - 1) / 2, 0.0).unwrap(), &kern).unwrap();
        ensure!(out.dims() == img.dims(), "pad+conv k={k}: {:?} vs {:?}", out.dims(), img.dims());
    }
    Ok("200 instances exact; pad then convolve keeps dims".into())
}

fn quanvolution_shape_law() -> Outcome {
    let cfg = QuanvConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let big = ImageTensor::from_fn(28, 28, |_, _| rng.gen_range(0.0..=1.0)).unwrap();
    let dims = quanvolve_image(&big, &cfg).unwrap().dims();
    ensure!(dims == (14, 14), "28x28 gave {dims:?}");
    let img = ImageTensor::from_fn(8, 8, |_, _| rng.gen_range(0.0..=1.0)).unwrap();
    let map = quanvolve_image(&img, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let patch = [img.get(2 * i, 2 * j), img.get(2 * i, 2 * j + 1), img.get(2 * i + 1, 2 * j), img.get(2 * i + 1, 2 * j + 1)];
            let spec = build_quanv_circuit(&patch, &cfg.circuit).unwrap();
            worst = worst.max((map.get(i, j) - oracle_expectation(&spec, 0)).abs());
        }
    }
    ensure!(worst < 1e-10, "8x8 max error {worst:e}");
    let records = qcnn::data::generate_synthetic(10, 28, 3, 6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = quanvolve_dataset(&records, &cfg, &Preprocess::default(), dir.path()).unwrap();
    let second = quanvolve_dataset(&records, &cfg, &Preprocess::default(), dir.path()).unwrap();
    ensure!(first.computed() == 30, "first run computed {}", first.computed());
    ensure!(second.computed() == 0 && second.skipped() == 30, "second run computed {}", second.computed());
    Ok(format!("28x28 -> 14x14, 8x8 max error {worst:.1e}, rerun computed 0"))
}

fn gradient_check() -> Outcome {
    let arch = Architecture::new(14, 14, 3);
    let params = weight_init(arch, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch: Vec<(Tensor3, usize)> = (0..4)
        .map(|i| {
            let values = (0..196).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            (Tensor3::new(1, 14, 14, values).unwrap(), i % 3)
        })
        .collect();
    let report = check_gradients(&params, &batch, &GradCheckConfig::default()).unwrap();
    let worst = report.max_rel_error();
    let kinks: usize = report.groups.iter().map(|g| g.kinks).sum();
    let checked: usize = report.groups.iter().map(|g| g.checked).sum();
    ensure!(report.groups.iter().all(|g| g.checked > 0), "a parameter group had no checkable entries");
    ensure!(worst < 1e-4, "max relative error {worst:e}: {report:?}");
    Ok(format!("{checked} entries over 8 groups, max rel error {worst:.1e}, {kinks} kink entries skipped"))
}

fn qcnn_bin(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qcnn")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("qcnn {} failed: {}", args[0], String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn end_to_end(root: &Path) -> Outcome {
    let start = Instant::now();
    let (data, cache, out) = (root.join("data"), root.join("cache"), root.join("run1"));
    qcnn_bin(&["synth", "--out", s(&data), "--per-class", "200", "--classes", "3", "--side", "28", "--seed", "7"])?;
    let counts = qcnn_bin(&["preprocess", "--data", s(&data), "--cache", s(&cache)])?;
    ensure!(counts.trim() == "computed=600 skipped=0 errored=0", "preprocess: {}", counts.trim());
    qcnn_bin(&["train", "--cache", s(&cache), "--out", s(&out), "--epochs", "20", "--seed", "7"])?;
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).map_err(|e| e.to_string())?;
    let epochs = metrics["metrics"]["epochs"].as_array().unwrap();
    ensure!(epochs.len() == 20, "{} epochs recorded", epochs.len());
    let loss: Vec<f64> = epochs.iter().map(|e| e["train_loss"].as_f64().unwrap()).collect();
    ensure!(loss[..5].windows(2).all(|w| w[1] < w[0]), "train loss not strictly decreasing: {:?}", &loss[..5]);
    let acc = metrics["metrics"]["val_accuracy"].as_f64().unwrap();
    ensure!(acc >= 0.90, "validation accuracy {acc}");
    let confusion: Vec<Vec<u64>> = fs::read_to_string(out.join("confusion.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let total: u64 = confusion.iter().flatten().sum();
    let trace: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
    ensure!(trace as f64 / total as f64 == acc, "trace/total {trace}/{total} != {acc}");
    Ok(format!(
        "val acc {acc:.4} ({trace}/{total}), first 5 losses {:.4?}, {:.1}s",
        &loss[..5],
        start.elapsed().as_secs_f64()
    ))
}

fn determinism(root: &Path) -> Outcome {
    let cache = root.join("cache");
    ensure!(cache.is_dir(), "no cache from the end-to-end run");
    let out = root.join("run2");
    qcnn_bin(&["train", "--cache", s(&cache), "--out", s(&out), "--epochs", "20", "--seed", "7"])?;
    for f in ["metrics.json", "curves.csv", "confusion.csv", "model.qnnw"] {
        let a = fs::read(root.join("run1").join(f)).map_err(|e| e.to_string())?;
        let b = fs::read(out.join(f)).map_err(|e| e.to_string())?;
        ensure!(a == b, "{f} differs between runs");
    }
    Ok("metrics.json, curves.csv, confusion.csv, model.qnnw byte-identical".into())
}

fn corruptions<T>(good: &[u8], decode: impl Fn(&[u8]) -> Result<T, FormatError>, what: &str) -> Result<usize, String> {
    let mut bad_magic = good.to_vec();
    bad_magic[0] ^= 0xff;
    ensure!(matches!(decode(&bad_magic), Err(FormatError::BadMagic { .. })), "{what}: bad magic not reported");
    let mut bad_crc = good.to_vec();
    let last = bad_crc.len() - 1;
    bad_crc[last] ^= 0x01;
    ensure!(matches!(decode(&bad_crc), Err(FormatError::BadCrc { .. })), "{what}: stored CRC flip not reported");
    let mut body = good.to_vec();
    let mid = body.len() - 12;
    body[mid] ^= 0x10;
    ensure!(matches!(decode(&body), Err(FormatError::BadCrc { .. })), "{what}: payload flip not reported");
    ensure!(matches!(decode(&good[..good.len() - 2]), Err(FormatError::Truncated(_))), "{what}: truncation not reported");
    for len in 0..good.len() {
        ensure!(decode(&good[..len]).is_err(), "{what}: prefix of {len} bytes accepted");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..2000 {
        let mut b = good.to_vec();
        let i = rng.gen_range(0..b.len());
        b[i] = rng.gen();
        let _ = decode(&b);
    }
    Ok(good.len())
}

fn format_robustness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let map = ImageTensor::from_fn(14, 14, |_, _| rng.gen_range(-1.0..=1.0)).unwrap();
    let cache = encode_cache(&CacheEntry { map, label: 2, depth_q: 1 });
    let model = encode_model(&weight_init(Architecture::new(14, 14, 3), 10).unwrap()).unwrap();
    ensure!(decode_cache(&cache).is_ok() && decode_model(&model).is_ok(), "clean files rejected");
    let n_cache = corruptions(&cache, decode_cache, "QNV1")?;
    let n_model = corruptions(&model, decode_model, "QNNW")?;
    Ok(format!("QNV1 ({n_cache} B) and QNNW ({n_model} B): magic, CRC, truncation reported; no panics"))
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("gate algebra", Box::new(gate_algebra)),
        ("simulator oracle", Box::new(simulator_oracle)),
        ("circuit ground truths", Box::new(circuit_ground_truths)),
        ("swap test law", Box::new(swap_test_law)),
        ("classical ops", Box::new(classical_ops)),
        ("quanvolution shape law", Box::new(quanvolution_shape_law)),
        ("gradient check", Box::new(gradient_check)),
        ("end-to-end desk-scale run", Box::new(|| end_to_end(root.path()))),
        ("determinism", Box::new(|| determinism(root.path()))),
        ("format robustness", Box::new(format_robustness)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<28} {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<28} {why} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
