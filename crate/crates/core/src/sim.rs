//! In-process statevector simulator.
//!
//! A circuit is evolved once from |0…0⟩; shots are then drawn from the final
//! outcome distribution. Gates are applied in place: single-qubit gates pair
//! amplitudes at stride 2^q, two-qubit gates act on groups of four.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::circuit::{gate_matrix, Circuit, Gate, GateKind, GateMatrix, Histogram, DEFAULT_MAX_QUBITS};

/// Probabilities below this are treated as exactly zero when sampling.
pub const ZERO_PROBABILITY: f64 = 1e-15;

/// Largest norm deviation `sample` accepts.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("circuit has {required} qubits, simulator limit is {max}")]
    TooManyQubits { required: usize, max: usize },
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("shots must be at least 1")]
    ZeroShots,
    #[error("amplitude vector length {0} is not a power of two >= 2")]
    BadLength(usize),
}

/// Sampling seed. Histograms are drawn with ChaCha8 seeded through
/// `SeedableRng::seed_from_u64`, so a seed reproduces across builds and hosts.
pub type Seed = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// |0…0⟩ on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1usize << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Self {
            num_qubits,
            amplitudes,
        }
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, SimError> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(SimError::BadLength(len));
        }
        Ok(Self {
            num_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies one gate in place. Targets must be inside the register.
    pub fn apply(&mut self, gate: &Gate) {
        let targets = gate.targets();
        match gate.kind() {
            GateKind::Cx => self.apply_cx(targets[0], targets[1]),
            GateKind::Cz => self.apply_cz(targets[0], targets[1]),
            GateKind::Swap => self.apply_swap(targets[0], targets[1]),
            kind => match gate_matrix(kind, gate.param()).expect("gate validated at construction") {
                GateMatrix::One(m) => self.apply_single(targets[0], &m),
                GateMatrix::Two(_) => unreachable!("two-qubit kinds handled above"),
            },
        }
    }

    fn apply_single(&mut self, qubit: usize, m: &[[Complex64; 2]; 2]) {
        let stride = 1usize << qubit;
        for block in self.amplitudes.chunks_exact_mut(stride << 1) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (v0, v1) = (*a0, *a1);
                *a0 = m[0][0] * v0 + m[0][1] * v1;
                *a1 = m[1][0] * v0 + m[1][1] * v1;
            }
        }
    }

    fn apply_cx(&mut self, control: usize, target: usize) {
        let (mc, mt) = (1usize << control, 1usize << target);
        for base in 0..self.amplitudes.len() {
            if base & (mc | mt) == 0 {
                self.amplitudes.swap(base | mc, base | mc | mt);
            }
        }
    }

    fn apply_cz(&mut self, a: usize, b: usize) {
        let both = (1usize << a) | (1usize << b);
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            if i & both == both {
                *amp = -*amp;
            }
        }
    }

    fn apply_swap(&mut self, a: usize, b: usize) {
        let (ma, mb) = (1usize << a, 1usize << b);
        for base in 0..self.amplitudes.len() {
            if base & (ma | mb) == 0 {
                self.amplitudes.swap(base | ma, base | mb);
            }
        }
    }
}

/// Statevector device with a configurable register limit.
#[derive(Debug, Clone, Copy)]
pub struct Simulator {
    max_qubits: usize,
}

impl Default for Simulator {
    fn default() -> Self {
        Self {
            max_qubits: DEFAULT_MAX_QUBITS,
        }
    }
}

impl Simulator {
    pub fn new(max_qubits: usize) -> Self {
        Self { max_qubits }
    }

    pub fn max_qubits(&self) -> usize {
        self.max_qubits
    }

    /// Evolves |0…0⟩ through the circuit's gates. The measurement marker is
    /// ignored.
    pub fn run(&self, circuit: &Circuit) -> Result<StateVector, SimError> {
        let n = circuit.num_qubits();
        if n > self.max_qubits {
            return Err(SimError::TooManyQubits {
                required: n,
                max: self.max_qubits,
            });
        }
        let mut state = StateVector::zero(n);
        for gate in circuit.gates() {
            state.apply(gate);
        }
        Ok(state)
    }

    /// Runs the circuit and draws `shots` samples.
    pub fn execute(&self, circuit: &Circuit, shots: u64, seed: Seed) -> Result<Histogram, SimError> {
        sample(&self.run(circuit)?, shots, seed)
    }
}

pub fn run_statevector(circuit: &Circuit) -> Result<StateVector, SimError> {
    Simulator::default().run(circuit)
}

/// p_k = |a_k|².
pub fn exact_probabilities(state: &StateVector) -> Vec<f64> {
    state.amplitudes.iter().map(|a| a.norm_sqr()).collect()
}

/// Draws `shots` outcomes from |a_k|² by inverting the cumulative
/// distribution with ChaCha8 uniforms.
pub fn sample(state: &StateVector, shots: u64, seed: Seed) -> Result<Histogram, SimError> {
    if shots == 0 {
        return Err(SimError::ZeroShots);
    }
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(SimError::NotNormalized(norm));
    }
    let mut cumulative = Vec::with_capacity(state.amplitudes.len());
    let mut total = 0.0;
    let mut last_populated = 0;
    for (k, p) in exact_probabilities(state).into_iter().enumerate() {
        if p >= ZERO_PROBABILITY {
            total += p;
            last_populated = k;
        }
        cumulative.push(total);
    }
    let mut counts = vec![0u64; cumulative.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..shots {
        let u: f64 = rng.gen::<f64>() * total;
        // First bucket whose upper edge exceeds u; empty buckets never qualify.
        let k = cumulative.partition_point(|&c| c <= u);
        counts[k.min(last_populated)] += 1;
    }
    Ok(Histogram::from_counts(counts).expect("shots >= 1 and length is a power of two"))
}
