//! The 4-qubit quanvolution circuit and the SWAP-test overlap primitive.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::statevector::{
    gate_crx, gate_crz, gate_cswap, gate_cz, gate_hadamard, gate_rx, GateMatrix, StateVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    Rx,
    H,
    Crz,
    Crx,
    Cz,
    Cswap,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "RX",
            GateKind::H => "H",
            GateKind::Crz => "CRZ",
            GateKind::Crx => "CRX",
            GateKind::Cz => "CZ",
            GateKind::Cswap => "CSWAP",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::Rx | GateKind::H => 1,
            GateKind::Crz | GateKind::Crx | GateKind::Cz => 2,
            GateKind::Cswap => 3,
        }
    }

    pub fn is_parameterized(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Crz | GateKind::Crx)
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "RX" => GateKind::Rx,
            "H" => GateKind::H,
            "CRZ" => GateKind::Crz,
            "CRX" => GateKind::Crx,
            "CZ" => GateKind::Cz,
            "CSWAP" => GateKind::Cswap,
            other => return Err(Error::Argument(format!("unknown gate {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub param: Option<f64>,
    pub targets: Vec<usize>,
}

impl GateOp {
    pub fn matrix(&self) -> Result<GateMatrix> {
        let theta = || {
            self.param
                .ok_or_else(|| Error::Argument(format!("{} needs an angle", self.kind.name())))
        };
        match self.kind {
            GateKind::Rx => gate_rx(theta()?),
            GateKind::H => Ok(gate_hadamard()),
            GateKind::Crz => gate_crz(theta()?),
            GateKind::Crx => gate_crx(theta()?),
            GateKind::Cz => Ok(gate_cz()),
            GateKind::Cswap => Ok(gate_cswap()),
        }
    }
}

/// One line of the text form: `GATE[ param] q...`.
impl fmt::Display for GateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        if let Some(p) = self.param {
            write!(f, " {p:?}")?;
        }
        for q in &self.targets {
            write!(f, " {q}")?;
        }
        Ok(())
    }
}

/// Ordered gate list over a fixed register size.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSpec {
    n_qubits: usize,
    ops: Vec<GateOp>,
}

impl CircuitSpec {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits, ops: Vec::new() }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn push(&mut self, kind: GateKind, param: Option<f64>, targets: Vec<usize>) -> Result<()> {
        if targets.len() != kind.arity() {
            return Err(Error::Argument(format!(
                "{} acts on {} qubit(s), got {:?}",
                kind.name(),
                kind.arity(),
                targets
            )));
        }
        match (kind.is_parameterized(), param) {
            (true, Some(p)) if !p.is_finite() => {
                return Err(Error::Argument(format!("{} angle must be finite", kind.name())))
            }
            (true, None) => {
                return Err(Error::Argument(format!("{} needs an angle", kind.name())))
            }
            (false, Some(_)) => {
                return Err(Error::Argument(format!("{} takes no angle", kind.name())))
            }
            _ => {}
        }
        for (i, &t) in targets.iter().enumerate() {
            if t >= self.n_qubits {
                return Err(Error::Argument(format!(
                    "qubit {t} out of range for {} qubits",
                    self.n_qubits
                )));
            }
            if targets[..i].contains(&t) {
                return Err(Error::Argument(format!("duplicate qubit {t} in {}", kind.name())));
            }
        }
        self.ops.push(GateOp { kind, param, targets });
        Ok(())
    }

    /// Applies every gate in order to `state`.
    pub fn apply_to(&self, state: &mut StateVector) -> Result<()> {
        if state.n_qubits() != self.n_qubits {
            return Err(Error::Argument(format!(
                "{}-qubit circuit applied to {}-qubit state",
                self.n_qubits,
                state.n_qubits()
            )));
        }
        for op in &self.ops {
            state.apply(&op.matrix()?, &op.targets)?;
        }
        Ok(())
    }

    /// Final state when started from `|0...0>`.
    pub fn simulate(&self) -> Result<StateVector> {
        let mut state = StateVector::zero(self.n_qubits)?;
        self.apply_to(&mut state)?;
        Ok(state)
    }

    /// Parses the text form produced by `Display`. Blank lines and `#`
    /// comments are ignored.
    pub fn parse(text: &str, n_qubits: usize) -> Result<Self> {
        let mut spec = CircuitSpec::new(n_qubits);
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let kind: GateKind = fields.next().unwrap_or_default().parse()?;
            let bad = |what: &str| Error::Argument(format!("bad {what} in line {line:?}"));
            let param = if kind.is_parameterized() {
                Some(
                    fields
                        .next()
                        .and_then(|p| p.parse::<f64>().ok())
                        .ok_or_else(|| bad("angle"))?,
                )
            } else {
                None
            };
            let targets = fields
                .map(|q| q.parse::<usize>().map_err(|_| bad("qubit index")))
                .collect::<Result<Vec<_>>>()?;
            spec.push(kind, param, targets)?;
        }
        Ok(spec)
    }
}

impl fmt::Display for CircuitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in &self.ops {
            writeln!(f, "{op}")?;
        }
        Ok(())
    }
}

/// How a qubit is read out: analytic expectation or finite-shot estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Readout {
    Exact,
    Sampled { shots: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuanvCircuitConfig {
    pub n_qubits: usize,
    /// Angle shared by every CRZ and CRX gate.
    pub theta: f64,
    /// Also entangle the last qubit with the first in the controlled-rotation layer.
    pub cr_ring_closure: bool,
    pub readout_qubit: usize,
    pub readout: Readout,
}

impl Default for QuanvCircuitConfig {
    fn default() -> Self {
        Self {
            n_qubits: 4,
            theta: FRAC_PI_2,
            cr_ring_closure: true,
            readout_qubit: 0,
            readout: Readout::Exact,
        }
    }
}

impl QuanvCircuitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 2 {
            return Err(Error::Config(format!("n_qubits must be >= 2, got {}", self.n_qubits)));
        }
        if self.readout_qubit >= self.n_qubits {
            return Err(Error::Config(format!(
                "readout qubit {} out of range for {} qubits",
                self.readout_qubit, self.n_qubits
            )));
        }
        if !self.theta.is_finite() {
            return Err(Error::Config("theta must be finite".into()));
        }
        if let Readout::Sampled { shots: 0, .. } = self.readout {
            return Err(Error::Config("sampled readout needs at least one shot".into()));
        }
        Ok(())
    }
}

fn check_pixel(value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Range(format!("pixel value {value} outside [0, 1]")));
    }
    Ok(())
}

/// Angle encoding of one normalised pixel: `RX(value * π)|0>`.
pub fn encode_pixel(value: f64) -> Result<StateVector> {
    check_pixel(value)?;
    let mut state = StateVector::zero(1)?;
    state.apply(&gate_rx(value * PI)?, &[0])?;
    Ok(state)
}

/// Pairs `(control, target)` of the controlled-rotation layer, in circuit order.
pub fn cr_pairs(config: &QuanvCircuitConfig) -> Vec<(usize, usize)> {
    let n = config.n_qubits;
    let mut pairs: Vec<_> = (0..n - 1).map(|k| (k, k + 1)).collect();
    if config.cr_ring_closure {
        pairs.push((n - 1, 0));
    }
    pairs
}

/// RX encoding layer, then CRZ followed by CRX on each neighbouring pair, then
/// a closed ring of CZ gates.
pub fn build_quanv_circuit(pixels: &[f64], config: &QuanvCircuitConfig) -> Result<CircuitSpec> {
    config.validate()?;
    if pixels.len() != config.n_qubits {
        return Err(Error::Argument(format!(
            "expected {} pixels, got {}",
            config.n_qubits,
            pixels.len()
        )));
    }
    let n = config.n_qubits;
    let mut spec = CircuitSpec::new(n);
    for (q, &p) in pixels.iter().enumerate() {
        check_pixel(p)?;
        spec.push(GateKind::Rx, Some(p * PI), vec![q])?;
    }
    for (c, t) in cr_pairs(config) {
        spec.push(GateKind::Crz, Some(config.theta), vec![c, t])?;
        spec.push(GateKind::Crx, Some(config.theta), vec![c, t])?;
    }
    for k in 0..n {
        spec.push(GateKind::Cz, None, vec![k, (k + 1) % n])?;
    }
    Ok(spec)
}

/// Reads out `state` on `qubit` according to `readout`.
pub fn read_z(state: &StateVector, qubit: usize, readout: Readout) -> Result<f64> {
    match readout {
        Readout::Exact => state.expectation_z(qubit),
        Readout::Sampled { shots, seed } => state.sample_z(qubit, shots, seed),
    }
}

/// Simulates the quanvolution circuit for one patch from `|0...0>` and returns
/// the Z expectation on the readout qubit.
pub fn run_quanv_circuit(pixels: &[f64], config: &QuanvCircuitConfig) -> Result<f64> {
    let state = build_quanv_circuit(pixels, config)?.simulate()?;
    read_z(&state, config.readout_qubit, config.readout)
}

/// SWAP test between two equal-size registers.
///
/// Prepares `|0>_anc ⊗ |a> ⊗ |b>`, applies H on the ancilla, a controlled swap
/// of every qubit pair, and H again, then returns the probability of reading
/// the ancilla as `0`, which equals `(1 + |<a|b>|^2) / 2`. In sampled mode the
/// empirical frequency of `0` is returned instead.
pub fn swap_test(a: &StateVector, b: &StateVector, mode: Readout) -> Result<f64> {
    if a.n_qubits() != b.n_qubits() {
        return Err(Error::Argument(format!(
            "swap test needs equal registers, got {} and {} qubits",
            a.n_qubits(),
            b.n_qubits()
        )));
    }
    let m = a.n_qubits();
    let mut state = StateVector::zero(1)?.tensor(a)?.tensor(b)?;
    let h = gate_hadamard();
    let cswap = gate_cswap();
    state.apply(&h, &[0])?;
    for k in 0..m {
        state.apply(&cswap, &[0, 1 + k, 1 + m + k])?;
    }
    state.apply(&h, &[0])?;
    match mode {
        // Both Hadamards scale by (1/sqrt 2)^2, which rounds above 1/2;
        // dividing by the norm cancels that common factor.
        Readout::Exact => Ok(state.probability_zero(0)? / state.norm_sqr()),
        Readout::Sampled { shots, seed } => {
            Ok(state.sample_zero_count(0, shots, seed)? as f64 / shots as f64)
        }
    }
}
