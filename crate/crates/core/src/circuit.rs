//! Gate-level circuit IR.
//!
//! A [`Circuit`] is an ordered list of gates over a single register, closed by
//! one terminal full-register measurement. It is the unit handed to devices,
//! emitters and the resource manager.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper bound on register size; 2^24 complex doubles is 256 MiB.
pub const DEFAULT_MAX_QUBITS: usize = 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CircuitError {
    #[error("register size {requested} out of range 1..={max}")]
    SizeOutOfRange { requested: usize, max: usize },
    #[error("qubit index {index} out of range for {num_qubits}-qubit register")]
    IndexOutOfRange { index: usize, num_qubits: usize },
    #[error("two-qubit gate {kind} applied to the same qubit {qubit} twice")]
    DuplicateTargets { kind: GateKind, qubit: usize },
    #[error("cannot append {kind} after the terminal measurement")]
    GateAfterMeasure { kind: GateKind },
    #[error("circuit is already measured")]
    DoubleMeasure,
    #[error("{kind} expects {expected} target qubit(s), got {got}")]
    WrongArity {
        kind: GateKind,
        expected: usize,
        got: usize,
    },
    #[error("{kind} requires a rotation angle")]
    MissingParameter { kind: GateKind },
    #[error("{kind} takes no parameter")]
    UnexpectedParameter { kind: GateKind },
    #[error("non-finite rotation angle {value} for {kind}")]
    NonFiniteParameter { kind: GateKind, value: f64 },
}

/// Number of qubits in a register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantumRegister {
    num_qubits: usize,
}

impl QuantumRegister {
    pub fn new(num_qubits: usize) -> Result<Self, CircuitError> {
        Self::with_max_qubits(num_qubits, DEFAULT_MAX_QUBITS)
    }

    pub fn with_max_qubits(num_qubits: usize, max_qubits: usize) -> Result<Self, CircuitError> {
        if num_qubits == 0 || num_qubits > max_qubits {
            return Err(CircuitError::SizeOutOfRange {
                requested: num_qubits,
                max: max_qubits,
            });
        }
        Ok(Self { num_qubits })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    /// Number of basis states, 2^n.
    pub fn dimension(&self) -> usize {
        1usize << self.num_qubits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    T,
    Tdg,
    Rx,
    Ry,
    Rz,
    Cx,
    Cz,
    Swap,
}

impl GateKind {
    pub const ALL: [GateKind; 14] = [
        GateKind::H,
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::S,
        GateKind::Sdg,
        GateKind::T,
        GateKind::Tdg,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Cx,
        GateKind::Cz,
        GateKind::Swap,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::Cx | GateKind::Cz | GateKind::Swap => 2,
            _ => 1,
        }
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz)
    }

    /// The `qelib1.inc` mnemonic.
    pub fn mnemonic(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::Cx => "cx",
            GateKind::Cz => "cz",
            GateKind::Swap => "swap",
        }
    }

    pub fn from_mnemonic(name: &str) -> Option<Self> {
        GateKind::ALL.into_iter().find(|k| k.mnemonic() == name)
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.mnemonic().to_uppercase())
    }
}

/// A single gate application. Construction validates arity, target
/// distinctness and parameter presence; register bounds are checked when the
/// gate is appended to a circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    kind: GateKind,
    qubits: [usize; 2],
    param: Option<f64>,
}

impl Gate {
    pub fn new(kind: GateKind, targets: &[usize], param: Option<f64>) -> Result<Self, CircuitError> {
        if targets.len() != kind.arity() {
            return Err(CircuitError::WrongArity {
                kind,
                expected: kind.arity(),
                got: targets.len(),
            });
        }
        match (kind.is_rotation(), param) {
            (true, None) => return Err(CircuitError::MissingParameter { kind }),
            (false, Some(_)) => return Err(CircuitError::UnexpectedParameter { kind }),
            (true, Some(value)) if !value.is_finite() => {
                return Err(CircuitError::NonFiniteParameter { kind, value })
            }
            _ => {}
        }
        if kind.arity() == 2 && targets[0] == targets[1] {
            return Err(CircuitError::DuplicateTargets {
                kind,
                qubit: targets[0],
            });
        }
        let mut qubits = [targets[0]; 2];
        qubits[..targets.len()].copy_from_slice(targets);
        Ok(Self { kind, qubits, param })
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    /// Target qubits; for CX the control comes first.
    pub fn targets(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub fn param(&self) -> Option<f64> {
        self.param
    }

    pub fn h(q: usize) -> Self {
        Self::fixed(GateKind::H, q)
    }

    pub fn x(q: usize) -> Self {
        Self::fixed(GateKind::X, q)
    }

    pub fn y(q: usize) -> Self {
        Self::fixed(GateKind::Y, q)
    }

    pub fn z(q: usize) -> Self {
        Self::fixed(GateKind::Z, q)
    }

    pub fn s(q: usize) -> Self {
        Self::fixed(GateKind::S, q)
    }

    pub fn sdg(q: usize) -> Self {
        Self::fixed(GateKind::Sdg, q)
    }

    pub fn t(q: usize) -> Self {
        Self::fixed(GateKind::T, q)
    }

    pub fn tdg(q: usize) -> Self {
        Self::fixed(GateKind::Tdg, q)
    }

    pub fn rx(q: usize, theta: f64) -> Result<Self, CircuitError> {
        Self::new(GateKind::Rx, &[q], Some(theta))
    }

    pub fn ry(q: usize, theta: f64) -> Result<Self, CircuitError> {
        Self::new(GateKind::Ry, &[q], Some(theta))
    }

    pub fn rz(q: usize, theta: f64) -> Result<Self, CircuitError> {
        Self::new(GateKind::Rz, &[q], Some(theta))
    }

    pub fn cx(control: usize, target: usize) -> Result<Self, CircuitError> {
        Self::new(GateKind::Cx, &[control, target], None)
    }

    pub fn cz(a: usize, b: usize) -> Result<Self, CircuitError> {
        Self::new(GateKind::Cz, &[a, b], None)
    }

    pub fn swap(a: usize, b: usize) -> Result<Self, CircuitError> {
        Self::new(GateKind::Swap, &[a, b], None)
    }

    fn fixed(kind: GateKind, q: usize) -> Self {
        Self {
            kind,
            qubits: [q, q],
            param: None,
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if let Some(p) = self.param {
            write!(f, "({p})")?;
        }
        let targets: Vec<String> = self.targets().iter().map(|q| q.to_string()).collect();
        write!(f, " {}", targets.join(","))
    }
}

/// Ordered gate list over one register with an optional terminal measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    register: QuantumRegister,
    gates: Vec<Gate>,
    measured: bool,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Result<Self, CircuitError> {
        Self::with_max_qubits(num_qubits, DEFAULT_MAX_QUBITS)
    }

    pub fn with_max_qubits(num_qubits: usize, max_qubits: usize) -> Result<Self, CircuitError> {
        Ok(Self {
            register: QuantumRegister::with_max_qubits(num_qubits, max_qubits)?,
            gates: Vec::new(),
            measured: false,
        })
    }

    pub fn register(&self) -> QuantumRegister {
        self.register
    }

    pub fn num_qubits(&self) -> usize {
        self.register.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn is_measured(&self) -> bool {
        self.measured
    }

    /// Appends `gate`. The existing prefix is never touched.
    pub fn apply(&mut self, gate: Gate) -> Result<&mut Self, CircuitError> {
        if self.measured {
            return Err(CircuitError::GateAfterMeasure { kind: gate.kind });
        }
        let n = self.num_qubits();
        if let Some(&index) = gate.targets().iter().find(|&&q| q >= n) {
            return Err(CircuitError::IndexOutOfRange {
                index,
                num_qubits: n,
            });
        }
        self.gates.push(gate);
        Ok(self)
    }

    pub fn h(&mut self, q: usize) -> Result<&mut Self, CircuitError> {
        self.apply(Gate::h(q))
    }

    pub fn cx(&mut self, control: usize, target: usize) -> Result<&mut Self, CircuitError> {
        self.apply(Gate::cx(control, target)?)
    }

    /// Records the terminal full-register measurement.
    pub fn measure(&mut self) -> Result<&mut Self, CircuitError> {
        if self.measured {
            return Err(CircuitError::DoubleMeasure);
        }
        self.measured = true;
        Ok(self)
    }

    /// Copy of the gate body with the measurement marker cleared.
    pub fn unmeasured(&self) -> Circuit {
        Circuit {
            register: self.register,
            gates: self.gates.clone(),
            measured: false,
        }
    }
}

/// The two-qubit Bell program: H on 0, CX 0→1, measure.
pub fn bell() -> Circuit {
    let mut c = Circuit::new(2).expect("2 qubits is in range");
    c.h(0).and_then(|c| c.cx(0, 1)).and_then(|c| c.measure()).expect("valid Bell construction");
    c
}

/// Three-qubit GHZ program.
pub fn ghz3() -> Circuit {
    let mut c = Circuit::new(3).expect("3 qubits is in range");
    c.h(0)
        .and_then(|c| c.cx(0, 1))
        .and_then(|c| c.cx(1, 2))
        .and_then(|c| c.measure())
        .expect("valid GHZ construction");
    c
}

/// Shot counts indexed by outcome integer, qubit 0 least significant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HistogramRepr", into = "HistogramRepr")]
pub struct Histogram {
    counts: Vec<u64>,
    shots: u64,
}

#[derive(Serialize, Deserialize)]
struct HistogramRepr {
    counts: Vec<u64>,
    shots: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistogramError {
    #[error("histogram length {0} is not a power of two >= 2")]
    BadLength(usize),
    #[error("histogram has zero shots")]
    NoShots,
    #[error("counts sum to {sum} but shots is {shots}")]
    SumMismatch { sum: u64, shots: u64 },
}

impl Histogram {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self, HistogramError> {
        if counts.len() < 2 || !counts.len().is_power_of_two() {
            return Err(HistogramError::BadLength(counts.len()));
        }
        let shots: u64 = counts.iter().sum();
        if shots == 0 {
            return Err(HistogramError::NoShots);
        }
        Ok(Self { counts, shots })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn num_qubits(&self) -> usize {
        self.counts.len().trailing_zeros() as usize
    }

    /// Bitstring for `index`, most significant qubit first.
    pub fn bitstring(&self, index: usize) -> String {
        let n = self.num_qubits();
        (0..n)
            .rev()
            .map(|q| if index >> q & 1 == 1 { '1' } else { '0' })
            .collect()
    }
}

impl TryFrom<HistogramRepr> for Histogram {
    type Error = HistogramError;

    fn try_from(repr: HistogramRepr) -> Result<Self, Self::Error> {
        let sum: u64 = repr.counts.iter().sum();
        if sum != repr.shots {
            return Err(HistogramError::SumMismatch {
                sum,
                shots: repr.shots,
            });
        }
        Histogram::from_counts(repr.counts)
    }
}

impl From<Histogram> for HistogramRepr {
    fn from(h: Histogram) -> Self {
        HistogramRepr {
            counts: h.counts,
            shots: h.shots,
        }
    }
}

/// Unitary for a gate kind: 2×2 for single-qubit kinds, 4×4 for two-qubit.
///
/// Two-qubit matrices are written in the basis |a b⟩ with index 2a + b, where
/// `a` is the first target (the control for CX).
#[derive(Debug, Clone, PartialEq)]
pub enum GateMatrix {
    One([[Complex64; 2]; 2]),
    Two([[Complex64; 4]; 4]),
}

pub fn gate_matrix(kind: GateKind, param: Option<f64>) -> Result<GateMatrix, CircuitError> {
    let theta = match (kind.is_rotation(), param) {
        (true, Some(t)) if t.is_finite() => t,
        (true, Some(value)) => return Err(CircuitError::NonFiniteParameter { kind, value }),
        (true, None) => return Err(CircuitError::MissingParameter { kind }),
        (false, Some(_)) => return Err(CircuitError::UnexpectedParameter { kind }),
        (false, None) => 0.0,
    };
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let zero = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let (half_cos, half_sin) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let m = match kind {
        GateKind::H => GateMatrix::One([
            [c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)],
            [c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0)],
        ]),
        GateKind::X => GateMatrix::One([[zero, one], [one, zero]]),
        GateKind::Y => GateMatrix::One([[zero, c(0.0, -1.0)], [c(0.0, 1.0), zero]]),
        GateKind::Z => GateMatrix::One([[one, zero], [zero, -one]]),
        GateKind::S => GateMatrix::One([[one, zero], [zero, c(0.0, 1.0)]]),
        GateKind::Sdg => GateMatrix::One([[one, zero], [zero, c(0.0, -1.0)]]),
        GateKind::T => GateMatrix::One([[one, zero], [zero, c(FRAC_1_SQRT_2, FRAC_1_SQRT_2)]]),
        GateKind::Tdg => {
            GateMatrix::One([[one, zero], [zero, c(FRAC_1_SQRT_2, -FRAC_1_SQRT_2)]])
        }
        GateKind::Rx => GateMatrix::One([
            [c(half_cos, 0.0), c(0.0, -half_sin)],
            [c(0.0, -half_sin), c(half_cos, 0.0)],
        ]),
        GateKind::Ry => GateMatrix::One([
            [c(half_cos, 0.0), c(-half_sin, 0.0)],
            [c(half_sin, 0.0), c(half_cos, 0.0)],
        ]),
        GateKind::Rz => GateMatrix::One([
            [c(half_cos, -half_sin), zero],
            [zero, c(half_cos, half_sin)],
        ]),
        GateKind::Cx => GateMatrix::Two([
            [one, zero, zero, zero],
            [zero, one, zero, zero],
            [zero, zero, zero, one],
            [zero, zero, one, zero],
        ]),
        GateKind::Cz => GateMatrix::Two([
            [one, zero, zero, zero],
            [zero, one, zero, zero],
            [zero, zero, one, zero],
            [zero, zero, zero, -one],
        ]),
        GateKind::Swap => GateMatrix::Two([
            [one, zero, zero, zero],
            [zero, zero, one, zero],
            [zero, one, zero, zero],
            [zero, zero, zero, one],
        ]),
    };
    Ok(m)
}
