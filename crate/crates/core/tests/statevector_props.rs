mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use qcnn::statevector::{
    apply_gate, circuit_unitary, gate_crx, gate_crz, gate_cswap, gate_cz, gate_hadamard, gate_rx, GateMatrix,
    StateVector,
};

proptest! {
    #[test]
    fn parameterised_gates_are_unitary(theta in -20.0f64..20.0) {
        for g in [gate_rx(theta).unwrap(), gate_crz(theta).unwrap(), gate_crx(theta).unwrap()] {
            prop_assert!(g.unitarity_error() < 1e-12);
        }
    }

    #[test]
    fn controlled_rotations_invert(theta in -20.0f64..20.0) {
        let id = GateMatrix::identity(4);
        let crz = gate_crz(theta).unwrap().matmul(&gate_crz(-theta).unwrap()).unwrap();
        let crx = gate_crx(theta).unwrap().matmul(&gate_crx(-theta).unwrap()).unwrap();
        prop_assert!(crz.max_abs_diff(&id) < 1e-12);
        prop_assert!(crx.max_abs_diff(&id) < 1e-12);
    }

    #[test]
    fn expectation_is_twice_p0_minus_one(seed in any::<u64>(), q in 0usize..4) {
        let psi = random_state(4, &mut ChaCha8Rng::seed_from_u64(seed));
        let z = psi.expectation_z(q).unwrap();
        let p0 = psi.probability_zero(q).unwrap();
        prop_assert!((z - (2.0 * p0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn apply_matches_permutation_embedding(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = random_state(4, &mut rng);
        let (gate, k) = random_gate(&mut rng);
        let targets = distinct_targets(4, k, &mut rng);
        let fast = apply_gate(&psi, &gate, &targets).unwrap();
        let dense = matvec(&embed_by_permutation(&to_mat(&gate), &targets, 4), psi.amplitudes());
        prop_assert!(max_diff(fast.amplitudes(), &dense) < 1e-10);
    }

    #[test]
    fn sampling_is_seed_reproducible(seed in any::<u64>(), shots in 1u64..5000) {
        let psi = random_state(3, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let a = psi.sample_z(1, shots, seed).unwrap();
        prop_assert_eq!(a.to_bits(), psi.sample_z(1, shots, seed).unwrap().to_bits());
        prop_assert!((-1.0..=1.0).contains(&a));
    }
}

#[test]
fn fixed_gates_are_unitary_involutions() {
    for g in [gate_hadamard(), gate_cz(), gate_cswap()] {
        assert!(g.unitarity_error() < 1e-12);
        assert!(g.matmul(&g).unwrap().max_abs_diff(&GateMatrix::identity(g.dim())) < 1e-12);
    }
}

#[test]
fn norm_preserved_over_1000_random_applications() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let psi = random_state(4, &mut rng);
        let (gate, k) = random_gate(&mut rng);
        let targets = distinct_targets(4, k, &mut rng);
        let out = apply_gate(&psi, &gate, &targets).unwrap();
        assert!((out.norm_sqr().sqrt() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn crz_on_qubits_1_2_matches_embedded_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let psi = random_state(4, &mut rng);
    let gate = gate_crz(std::f64::consts::FRAC_PI_2).unwrap();
    let fast = apply_gate(&psi, &gate, &[1, 2]).unwrap();
    let dense = matvec(&embed_by_permutation(&to_mat(&gate), &[1, 2], 4), psi.amplitudes());
    assert!(max_diff(fast.amplitudes(), &dense) < 1e-10);
}

#[test]
fn library_unitary_agrees_with_test_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for n in 1..=4 {
        for _ in 0..10 {
            let len = rng.gen_range(0..=12);
            let spec = random_circuit(n, len, &mut rng);
            let lib = to_mat(&circuit_unitary(&spec, n).unwrap());
            let ours = circuit_matrix(&spec);
            let flat = |m: &Mat| m.iter().flatten().copied().collect::<Vec<Complex64>>();
            assert!(max_diff(&flat(&lib), &flat(&ours)) < 1e-12);
        }
    }
}

#[test]
fn plus_state_sampling_concentrates() {
    let h = 0.5f64.sqrt();
    let plus = StateVector::from_amplitudes(vec![Complex64::new(h, 0.0); 2]).unwrap();
    let z = plus.sample_z(0, 100_000, 77).unwrap();
    assert!(z.abs() <= 3.0 / (100_000f64).sqrt());
}
