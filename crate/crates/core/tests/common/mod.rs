//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;

use qcnn::circuit::{CircuitSpec, GateKind};
use qcnn::imageops::ImageTensor;
use qcnn::statevector::{gate_crx, gate_crz, gate_cswap, gate_cz, gate_hadamard, gate_rx, GateMatrix, StateVector};

pub type Mat = Vec<Vec<Complex64>>;

pub fn to_mat(g: &GateMatrix) -> Mat {
    (0..g.dim()).map(|r| (0..g.dim()).map(|c| g.get(r, c)).collect()).collect()
}

pub fn identity(dim: usize) -> Mat {
    (0..dim)
        .map(|r| (0..dim).map(|c| if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }).collect())
        .collect()
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![Complex64::new(0.0, 0.0); n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn matvec(a: &Mat, v: &[Complex64]) -> Vec<Complex64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// Permutation matrix sending qubit order `order[0], order[1], ...` (qubit 0
/// most significant) to positions `0, 1, ...`.
#[allow(clippy::needless_range_loop)]
fn qubit_permutation(order: &[usize]) -> Mat {
    let n = order.len();
    let dim = 1 << n;
    let mut p = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
    for src in 0..dim {
        let mut dst = 0;
        for &q in order {
            dst = (dst << 1) | ((src >> (n - 1 - q)) & 1);
        }
        p[dst][src] = Complex64::new(1.0, 0.0);
    }
    p
}

/// `P^T (G ⊗ I) P` with `P` moving the targets to the front.
pub fn embed_by_permutation(gate: &Mat, targets: &[usize], n: usize) -> Mat {
    let mut order = targets.to_vec();
    order.extend((0..n).filter(|q| !targets.contains(q)));
    let p = qubit_permutation(&order);
    let pt: Mat = (0..p.len()).map(|r| (0..p.len()).map(|c| p[c][r]).collect()).collect();
    let rest = identity(1 << (n - targets.len()));
    matmul(&pt, &matmul(&kron(gate, &rest), &p))
}

pub fn circuit_matrix(spec: &CircuitSpec) -> Mat {
    let n = spec.n_qubits();
    let mut u = identity(1 << n);
    for op in spec.ops() {
        let g = to_mat(&op.matrix().unwrap());
        u = matmul(&embed_by_permutation(&g, &op.targets, n), &u);
    }
    u
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn random_state(n: usize, rng: &mut impl Rng) -> StateVector {
    let amps: Vec<Complex64> = (0..1 << n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

pub fn distinct_targets(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k).into_vec()
}

/// Random circuit of `len` gates over the full gate set on `n` qubits.
pub fn random_circuit(n: usize, len: usize, rng: &mut impl Rng) -> CircuitSpec {
    let kinds = [GateKind::Rx, GateKind::H, GateKind::Crz, GateKind::Crx, GateKind::Cz, GateKind::Cswap];
    let mut spec = CircuitSpec::new(n);
    while spec.len() < len {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        if kind.arity() > n {
            continue;
        }
        let param = kind.is_parameterized().then(|| rng.gen_range(-7.0..7.0));
        spec.push(kind, param, distinct_targets(n, kind.arity(), rng)).unwrap();
    }
    spec
}

pub fn random_gate(rng: &mut impl Rng) -> (GateMatrix, usize) {
    let t = rng.gen_range(-7.0..7.0);
    match rng.gen_range(0..6) {
        0 => (gate_rx(t).unwrap(), 1),
        1 => (gate_hadamard(), 1),
        2 => (gate_crz(t).unwrap(), 2),
        3 => (gate_crx(t).unwrap(), 2),
        4 => (gate_cz(), 2),
        _ => (gate_cswap(), 3),
    }
}

pub fn random_image(h: usize, w: usize, rng: &mut impl Rng) -> ImageTensor {
    ImageTensor::from_fn(h, w, |_, _| rng.gen_range(-5.0..5.0)).unwrap()
}

pub fn naive_conv(img: &ImageTensor, k: &ImageTensor) -> Vec<Vec<f64>> {
    let (oh, ow) = (img.height() - k.height() + 1, img.width() - k.width() + 1);
    let mut out = vec![vec![0.0; ow]; oh];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for m in 0..k.height() {
                for n in 0..k.width() {
                    acc += img.get(i + m, j + n) * k.get(m, n);
                }
            }
            *v = acc;
        }
    }
    out
}

pub enum Pool {
    Max,
    Avg,
    L2,
}

pub fn naive_pool(img: &ImageTensor, window: usize, stride: usize, kind: Pool) -> Vec<Vec<f64>> {
    let oh = (img.height() - window) / stride + 1;
    let ow = (img.width() - window) / stride + 1;
    let mut out = vec![vec![0.0; ow]; oh];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let mut cells = Vec::new();
            for m in 0..window {
                for n in 0..window {
                    cells.push(img.get(i * stride + m, j * stride + n));
                }
            }
            let count = cells.len() as f64;
            *v = match kind {
                Pool::Max => cells.into_iter().fold(f64::NEG_INFINITY, f64::max),
                Pool::Avg => cells.iter().sum::<f64>() / count,
                Pool::L2 => cells.iter().map(|c| c * c).sum::<f64>() / count,
            };
        }
    }
    out
}

pub fn rows(img: &ImageTensor) -> Vec<Vec<f64>> {
    (0..img.height()).map(|r| (0..img.width()).map(|c| img.get(r, c)).collect()).collect()
}

/// `<Z>` on `qubit` for the quanvolution circuit of `pixels`, via the dense
/// matrix of the whole circuit applied to |0...0>.
pub fn oracle_expectation(spec: &CircuitSpec, qubit: usize) -> f64 {
    let n = spec.n_qubits();
    let u = circuit_matrix(spec);
    let mut zero = vec![Complex64::new(0.0, 0.0); 1 << n];
    zero[0] = Complex64::new(1.0, 0.0);
    let psi = matvec(&u, &zero);
    psi.iter()
        .enumerate()
        .map(|(i, a)| if (i >> (n - 1 - qubit)) & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}
