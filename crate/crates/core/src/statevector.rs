//! Dense state-vector simulation.
//!
//! Basis ordering: qubit 0 is the most significant bit of the basis index, so
//! `|q0 q1 q2 q3>` lives at index `q0*8 + q1*4 + q2*2 + q3`. Multi-qubit gates
//! follow the same rule locally: the first listed target is the high bit of the
//! gate's own basis (control before target for controlled gates).
//!
//! Gates are applied by mixing the amplitude groups that differ only in the
//! target bits. [`circuit_unitary`] builds the full `2^n x 2^n` matrix through
//! Kronecker embedding instead and is kept as an independent oracle.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::CircuitSpec;
use crate::error::{Error, Result};

pub type ComplexAmp = Complex64;

/// Largest register [`zero_state`] will allocate.
pub const MAX_QUBITS: usize = 20;
/// Largest register [`circuit_unitary`] will expand into a dense matrix.
pub const ORACLE_MAX_QUBITS: usize = 8;

const NORM_TOLERANCE: f64 = 1e-10;
const NORM_DRIFT_LIMIT: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn check_qubits(n_qubits: usize, max: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > max {
        return Err(Error::Size(format!(
            "register of {n_qubits} qubits outside supported range 1..={max}"
        )));
    }
    Ok(())
}

fn check_finite(name: &str, theta: f64) -> Result<()> {
    if !theta.is_finite() {
        return Err(Error::Argument(format!("{name} angle must be finite, got {theta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_qubits(n_qubits, MAX_QUBITS)?;
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Ok(Self { n_qubits, amps })
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_qubits(n_qubits, MAX_QUBITS)?;
        if index >= 1 << n_qubits {
            return Err(Error::Argument(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            )));
        }
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[index] = ONE;
        Ok(Self { n_qubits, amps })
    }

    /// Wraps explicit amplitudes. The length must be a power of two and the
    /// vector must already be normalised to within 1e-10.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Size(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_qubits(n_qubits, MAX_QUBITS)?;
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Argument("amplitudes must be finite".into()));
        }
        let state = Self { n_qubits, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Argument(format!(
                "amplitudes are not normalised (sum |a|^2 = {norm})"
            )));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `self ⊗ other`; the qubits of `self` come first.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let n_qubits = self.n_qubits + other.n_qubits;
        check_qubits(n_qubits, MAX_QUBITS)?;
        let mut amps = Vec::with_capacity(1 << n_qubits);
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        Ok(Self { n_qubits, amps })
    }

    fn qubit_mask(&self, qubit: usize) -> Result<usize> {
        if qubit >= self.n_qubits {
            return Err(Error::Argument(format!(
                "qubit {qubit} out of range for {} qubits",
                self.n_qubits
            )));
        }
        Ok(1 << (self.n_qubits - 1 - qubit))
    }

    /// Applies `gate` to the listed target qubits in place.
    pub fn apply(&mut self, gate: &GateMatrix, targets: &[usize]) -> Result<()> {
        let k = targets.len();
        if k == 0 || gate.dim != 1 << k {
            return Err(Error::Application(format!(
                "gate of dimension {} cannot act on {k} target qubit(s)",
                gate.dim
            )));
        }
        let mut target_mask = 0usize;
        for &t in targets {
            if t >= self.n_qubits {
                return Err(Error::Application(format!(
                    "target qubit {t} out of range for {} qubits",
                    self.n_qubits
                )));
            }
            let bit = 1 << (self.n_qubits - 1 - t);
            if target_mask & bit != 0 {
                return Err(Error::Application(format!("duplicate target qubit {t}")));
            }
            target_mask |= bit;
        }

        // offsets[l] is the global index offset of local basis state l.
        let offsets: Vec<usize> = (0..gate.dim)
            .map(|local| {
                targets
                    .iter()
                    .enumerate()
                    .filter(|(pos, _)| local & (1 << (k - 1 - pos)) != 0)
                    .map(|(_, &t)| 1 << (self.n_qubits - 1 - t))
                    .sum()
            })
            .collect();

        let mut input = vec![ZERO; gate.dim];
        for base in 0..self.amps.len() {
            if base & target_mask != 0 {
                continue;
            }
            for (slot, off) in input.iter_mut().zip(&offsets) {
                *slot = self.amps[base + off];
            }
            for (row, off) in offsets.iter().enumerate() {
                let coeffs = &gate.entries[row * gate.dim..(row + 1) * gate.dim];
                self.amps[base + off] = coeffs.iter().zip(&input).map(|(u, a)| u * a).sum();
            }
        }

        let norm = self.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_DRIFT_LIMIT {
            return Err(Error::Consistency(format!(
                "state norm drifted to {norm} after gate on {targets:?}"
            )));
        }
        Ok(())
    }

    /// `<Z>` on `qubit`: `P(0) - P(1)`.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        let mask = self.qubit_mask(qubit)?;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(k, a)| if k & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    pub fn probability_zero(&self, qubit: usize) -> Result<f64> {
        let mask = self.qubit_mask(qubit)?;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(k, _)| k & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Number of `0` outcomes in `shots` simulated Z measurements of `qubit`.
    ///
    /// Draws come from ChaCha8 seeded with `ChaCha8Rng::seed_from_u64(seed)`;
    /// a shot reads `0` when its uniform `[0,1)` draw is below `P(0)`.
    pub fn sample_zero_count(&self, qubit: usize, shots: u64, seed: u64) -> Result<u64> {
        if shots == 0 {
            return Err(Error::Argument("shots must be at least 1".into()));
        }
        let p0 = self.probability_zero(qubit)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..shots).filter(|_| rng.gen::<f64>() < p0).count() as u64)
    }

    /// Shot-averaged `<Z>` estimate. Same seed, same result.
    pub fn sample_z(&self, qubit: usize, shots: u64, seed: u64) -> Result<f64> {
        let zeros = self.sample_zero_count(qubit, shots, seed)?;
        let ones = shots - zeros;
        Ok((zeros as f64 - ones as f64) / shots as f64)
    }

    /// `<self|other>`.
    pub fn inner_product(&self, other: &StateVector) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::Argument(format!(
                "inner product of {}-qubit and {}-qubit states",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

pub fn zero_state(n_qubits: usize) -> Result<StateVector> {
    StateVector::zero(n_qubits)
}

/// Functional form of [`StateVector::apply`].
pub fn apply_gate(state: &StateVector, gate: &GateMatrix, targets: &[usize]) -> Result<StateVector> {
    let mut out = state.clone();
    out.apply(gate, targets)?;
    Ok(out)
}

pub fn expectation_z(state: &StateVector, qubit: usize) -> Result<f64> {
    state.expectation_z(qubit)
}

pub fn probability_zero(state: &StateVector, qubit: usize) -> Result<f64> {
    state.probability_zero(qubit)
}

pub fn sample_z(state: &StateVector, qubit: usize, shots: u64, seed: u64) -> Result<f64> {
    state.sample_z(qubit, shots, seed)
}

pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<Complex64> {
    a.inner_product(b)
}

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl GateMatrix {
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if dim < 2 || !dim.is_power_of_two() || entries.len() != dim * dim {
            return Err(Error::Size(format!(
                "{} entries do not form a {dim}x{dim} gate",
                entries.len()
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![ZERO; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = ONE;
        }
        Self { dim, entries }
    }

    fn diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::identity(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m.entries[i * m.dim + i] = *d;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &GateMatrix) -> Result<GateMatrix> {
        if self.dim != rhs.dim {
            return Err(Error::Size(format!(
                "cannot multiply {0}x{0} by {1}x{1}",
                self.dim, rhs.dim
            )));
        }
        let n = self.dim;
        let mut entries = vec![ZERO; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    entries[i * n + j] += a * rhs.entries[k * n + j];
                }
            }
        }
        Ok(GateMatrix { dim: n, entries })
    }

    pub fn adjoint(&self) -> GateMatrix {
        let n = self.dim;
        let mut entries = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[j * n + i] = self.entries[i * n + j].conj();
            }
        }
        GateMatrix { dim: n, entries }
    }

    /// Matrix-vector product on raw amplitudes.
    pub fn apply_to(&self, amps: &[Complex64]) -> Result<Vec<Complex64>> {
        if amps.len() != self.dim {
            return Err(Error::Size(format!(
                "{}x{} matrix applied to vector of length {}",
                self.dim,
                self.dim,
                amps.len()
            )));
        }
        Ok(self
            .entries
            .chunks(self.dim)
            .map(|row| row.iter().zip(amps).map(|(u, a)| u * a).sum())
            .collect())
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &GateMatrix) -> f64 {
        if self.dim != other.dim {
            return f64::INFINITY;
        }
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `max |(U^dagger U - I)_ij|`.
    pub fn unitarity_error(&self) -> f64 {
        self.adjoint()
            .matmul(self)
            .map(|p| p.max_abs_diff(&GateMatrix::identity(self.dim)))
            .unwrap_or(f64::INFINITY)
    }
}

pub fn gate_rx(theta: f64) -> Result<GateMatrix> {
    check_finite("RX", theta)?;
    let c = Complex64::new((theta / 2.0).cos(), 0.0);
    let s = Complex64::new(0.0, -(theta / 2.0).sin());
    Ok(GateMatrix { dim: 2, entries: vec![c, s, s, c] })
}

pub fn gate_hadamard() -> GateMatrix {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    GateMatrix { dim: 2, entries: vec![h, h, h, -h] }
}

/// Controlled Z-rotation: `diag(1, 1, e^{-iθ/2}, e^{iθ/2})`.
pub fn gate_crz(theta: f64) -> Result<GateMatrix> {
    check_finite("CRZ", theta)?;
    Ok(GateMatrix::diagonal(&[
        ONE,
        ONE,
        Complex64::from_polar(1.0, -theta / 2.0),
        Complex64::from_polar(1.0, theta / 2.0),
    ]))
}

/// Controlled X-rotation: identity on `|0x>`, `RX(θ)` on the target when the
/// control is set.
pub fn gate_crx(theta: f64) -> Result<GateMatrix> {
    let rx = gate_rx(theta)?;
    let mut m = GateMatrix::identity(4);
    for r in 0..2 {
        for c in 0..2 {
            m.entries[(r + 2) * 4 + (c + 2)] = rx.get(r, c);
        }
    }
    Ok(m)
}

pub fn gate_cz() -> GateMatrix {
    GateMatrix::diagonal(&[ONE, ONE, ONE, -ONE])
}

/// Fredkin gate on `(control, a, b)`.
pub fn gate_cswap() -> GateMatrix {
    let mut m = GateMatrix::identity(8);
    // |101> <-> |110>
    for (i, j) in [(5usize, 5usize), (6, 6), (5, 6), (6, 5)] {
        m.entries[i * 8 + j] = if i == j { ZERO } else { ONE };
    }
    m
}

/// Kronecker embedding of a local gate into the full `2^n` space.
fn embed(gate: &GateMatrix, targets: &[usize], n_qubits: usize) -> Result<GateMatrix> {
    let k = targets.len();
    if gate.dim != 1 << k {
        return Err(Error::Application(format!(
            "gate of dimension {} cannot act on {k} target qubit(s)",
            gate.dim
        )));
    }
    let mut target_mask = 0usize;
    for &t in targets {
        if t >= n_qubits {
            return Err(Error::Application(format!(
                "target qubit {t} out of range for {n_qubits} qubits"
            )));
        }
        let bit = 1 << (n_qubits - 1 - t);
        if target_mask & bit != 0 {
            return Err(Error::Application(format!("duplicate target qubit {t}")));
        }
        target_mask |= bit;
    }
    let local = |global: usize| -> usize {
        targets.iter().fold(0, |acc, &t| {
            (acc << 1) | ((global >> (n_qubits - 1 - t)) & 1)
        })
    };
    let dim = 1 << n_qubits;
    let mut entries = vec![ZERO; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            if i & !target_mask == j & !target_mask {
                entries[i * dim + j] = gate.get(local(i), local(j));
            }
        }
    }
    Ok(GateMatrix { dim, entries })
}

/// Dense unitary of a whole circuit, built as the ordered product of
/// Kronecker-embedded gate matrices. Intended as a reference for small
/// registers only.
pub fn circuit_unitary(spec: &CircuitSpec, n_qubits: usize) -> Result<GateMatrix> {
    check_qubits(n_qubits, ORACLE_MAX_QUBITS)?;
    let mut total = GateMatrix::identity(1 << n_qubits);
    for op in spec.ops() {
        let full = embed(&op.matrix()?, &op.targets, n_qubits)?;
        total = full.matmul(&total)?;
    }
    Ok(total)
}
