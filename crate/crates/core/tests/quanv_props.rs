mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use qcnn::circuit::{build_quanv_circuit, run_quanv_circuit, QuanvCircuitConfig};
use qcnn::data::cache::{list_cache_files, read_cache};
use qcnn::data::{generate_synthetic, write_cache, CacheEntry};
use qcnn::imageops::ImageTensor;
use qcnn::quanv::{extract_patch, quanvolve_dataset, quanvolve_image, Preprocess, QuanvConfig};

fn unit_image(h: usize, w: usize, rng: &mut impl Rng) -> ImageTensor {
    ImageTensor::from_fn(h, w, |_, _| rng.gen_range(0.0..=1.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn outputs_in_range_and_deterministic(seed in any::<u64>(), depth in 1usize..=2, ring: bool) {
        let img = unit_image(8, 10, &mut ChaCha8Rng::seed_from_u64(seed));
        let cfg = QuanvConfig {
            depth_q: depth,
            circuit: QuanvCircuitConfig { cr_ring_closure: ring, ..Default::default() },
            ..QuanvConfig::default()
        };
        let map = quanvolve_image(&img, &cfg).unwrap();
        prop_assert!(map.values().iter().all(|v| (-1.0..=1.0).contains(v)));
        let again = quanvolve_image(&img, &cfg).unwrap();
        let bits = |m: &ImageTensor| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&map), bits(&again));
    }

    #[test]
    fn shape_law(h in 2usize..40, w in 2usize..40, depth in 1usize..=3) {
        let cfg = QuanvConfig { depth_q: depth, ..QuanvConfig::default() };
        let (mut eh, mut ew) = (h, w);
        let mut fits = true;
        for _ in 0..depth {
            if eh < 2 || ew < 2 {
                fits = false;
                break;
            }
            eh /= 2;
            ew /= 2;
        }
        let img = ImageTensor::filled(h, w, 0.3).unwrap();
        match quanvolve_image(&img, &cfg) {
            Ok(map) => {
                prop_assert!(fits);
                prop_assert_eq!(map.dims(), (eh, ew));
            }
            Err(_) => prop_assert!(!fits),
        }
    }

    #[test]
    fn cache_roundtrip_is_bit_exact(seed in any::<u64>(), h in 1usize..16, w in 1usize..16, label in 0u32..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = ImageTensor::from_fn(h, w, |_, _| rng.gen_range(-1.0..=1.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.qnv");
        let entry = CacheEntry { map, label, depth_q: 1 };
        write_cache(&path, &entry).unwrap();
        let back = read_cache(&path).unwrap();
        let bits = |e: &CacheEntry| e.map.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&entry));
        prop_assert_eq!(back, entry);
    }
}

/// Evaluating patches one at a time, in shuffled order, reproduces the map.
#[test]
fn patch_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let img = unit_image(12, 10, &mut rng);
    let cfg = QuanvConfig::default();
    let map = quanvolve_image(&img, &cfg).unwrap();
    let mut order: Vec<(usize, usize)> = (0..6).flat_map(|i| (0..5).map(move |j| (i, j))).collect();
    order.shuffle(&mut rng);
    let mut manual = vec![f64::NAN; 30];
    for (i, j) in order {
        let patch = extract_patch(&img, 2 * i, 2 * j, 2).unwrap();
        manual[i * 5 + j] = run_quanv_circuit(&patch, &cfg.circuit).unwrap();
    }
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(map.values()), bits(&manual));

    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = single.install(|| quanvolve_image(&img, &cfg).unwrap());
    assert_eq!(bits(map.values()), bits(serial.values()));
}

#[test]
fn entries_match_dense_oracle_on_random_8x8() {
    let img = unit_image(8, 8, &mut ChaCha8Rng::seed_from_u64(88));
    let cfg = QuanvConfig::default();
    let map = quanvolve_image(&img, &cfg).unwrap();
    assert_eq!(map.dims(), (4, 4));
    for i in 0..4 {
        for j in 0..4 {
            let patch: Vec<f64> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                .iter()
                .map(|&(di, dj)| img.get(2 * i + di, 2 * j + dj))
                .collect();
            let spec = build_quanv_circuit(&patch, &cfg.circuit).unwrap();
            assert!((map.get(i, j) - oracle_expectation(&spec, 0)).abs() < 1e-10);
        }
    }
}

#[test]
fn hundred_records_give_hundred_14x14_cache_files() {
    let records = generate_synthetic(25, 28, 4, 3).unwrap();
    assert_eq!(records.len(), 100);
    let dir = tempfile::tempdir().unwrap();
    let manifest = quanvolve_dataset(&records, &QuanvConfig::default(), &Preprocess::default(), dir.path()).unwrap();
    assert_eq!(manifest.computed(), 100);
    let files = list_cache_files(dir.path()).unwrap();
    assert_eq!(files.len(), 100);
    for f in files {
        assert_eq!(read_cache(&f).unwrap().map.dims(), (14, 14));
    }
    let again = quanvolve_dataset(&records, &QuanvConfig::default(), &Preprocess::default(), dir.path()).unwrap();
    assert_eq!((again.computed(), again.skipped()), (0, 100));
}
