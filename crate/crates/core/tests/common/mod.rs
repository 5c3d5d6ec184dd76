//! Shared generators and reference models for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qoffload::circuit::{Circuit, Gate, GateKind, Histogram};
use qoffload::resman::{ErrorCode, WireRequest, WireResponse};
use qoffload::runtime::JobStatus;
use rand::Rng;

type C = Complex64;

pub fn random_gate(rng: &mut impl Rng, n: usize) -> Gate {
    loop {
        let kind = GateKind::ALL[rng.gen_range(0..GateKind::ALL.len())];
        if kind.arity() > n {
            continue;
        }
        let a = rng.gen_range(0..n);
        let targets = if kind.arity() == 2 {
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            vec![a, b]
        } else {
            vec![a]
        };
        let param = kind.is_rotation().then(|| rng.gen_range(-7.0..7.0));
        return Gate::new(kind, &targets, param).expect("generator builds valid gates");
    }
}

pub fn random_circuit(rng: &mut impl Rng, max_qubits: usize, max_gates: usize, measured: bool) -> Circuit {
    let n = rng.gen_range(1..=max_qubits);
    let mut c = Circuit::new(n).unwrap();
    for _ in 0..rng.gen_range(0..=max_gates) {
        c.apply(random_gate(rng, n)).unwrap();
    }
    if measured {
        c.measure().unwrap();
    }
    c
}

fn m2(a: [C; 4]) -> DMatrix<C> {
    DMatrix::from_row_slice(2, 2, &a)
}

/// Single-qubit matrices written out from their textbook definitions.
fn one_qubit(kind: GateKind, theta: f64) -> DMatrix<C> {
    let (o, l, i) = (C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 1.0));
    let r = C::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let phase = |phi: f64| C::from_polar(1.0, phi);
    match kind {
        GateKind::H => m2([r, r, r, -r]),
        GateKind::X => m2([o, l, l, o]),
        GateKind::Y => m2([o, -i, i, o]),
        GateKind::Z => m2([l, o, o, -l]),
        GateKind::S => m2([l, o, o, i]),
        GateKind::Sdg => m2([l, o, o, -i]),
        GateKind::T => m2([l, o, o, phase(std::f64::consts::FRAC_PI_4)]),
        GateKind::Tdg => m2([l, o, o, phase(-std::f64::consts::FRAC_PI_4)]),
        GateKind::Rx => m2([C::new(c, 0.0), C::new(0.0, -s), C::new(0.0, -s), C::new(c, 0.0)]),
        GateKind::Ry => m2([C::new(c, 0.0), C::new(-s, 0.0), C::new(s, 0.0), C::new(c, 0.0)]),
        GateKind::Rz => m2([phase(-theta / 2.0), o, o, phase(theta / 2.0)]),
        other => panic!("{other:?} is not a single-qubit gate"),
    }
}

/// Full-register operator with `ops[q]` on qubit q, identity elsewhere.
/// Qubit 0 is the least significant index bit, so it is the rightmost factor.
fn embed(n: usize, ops: &[(usize, DMatrix<C>)]) -> DMatrix<C> {
    let mut m = DMatrix::<C>::identity(1, 1);
    for q in (0..n).rev() {
        let factor = ops
            .iter()
            .find(|(t, _)| *t == q)
            .map(|(_, op)| op.clone())
            .unwrap_or_else(|| DMatrix::identity(2, 2));
        m = m.kronecker(&factor);
    }
    m
}

pub fn dense_gate(n: usize, gate: &Gate) -> DMatrix<C> {
    let t = gate.targets();
    let (o, l) = (C::new(0.0, 0.0), C::new(1.0, 0.0));
    let p0 = m2([l, o, o, o]);
    let p1 = m2([o, o, o, l]);
    let pauli = |k| one_qubit(k, 0.0);
    match gate.kind() {
        GateKind::Cx => embed(n, &[(t[0], p0)]) + embed(n, &[(t[0], p1), (t[1], pauli(GateKind::X))]),
        GateKind::Cz => embed(n, &[(t[0], p0)]) + embed(n, &[(t[0], p1), (t[1], pauli(GateKind::Z))]),
        GateKind::Swap => {
            // SWAP = (II + XX + YY + ZZ) / 2
            let mut m = embed(n, &[]);
            for k in [GateKind::X, GateKind::Y, GateKind::Z] {
                m += embed(n, &[(t[0], pauli(k)), (t[1], pauli(k))]);
            }
            m * C::new(0.5, 0.0)
        }
        kind => embed(n, &[(t[0], one_qubit(kind, gate.param().unwrap_or(0.0)))]),
    }
}

/// Statevector by multiplying dense 2^n x 2^n operators onto |0…0⟩.
pub fn dense_statevector(circuit: &Circuit) -> DVector<C> {
    let n = circuit.num_qubits();
    let mut psi = DVector::<C>::zeros(1 << n);
    psi[0] = C::new(1.0, 0.0);
    for gate in circuit.gates() {
        psi = dense_gate(n, gate) * psi;
    }
    psi
}

fn random_string(rng: &mut impl Rng) -> String {
    let alphabet = ['a', 'Z', '0', ' ', '\n', '"', '\\', 'π', '{', '→', '\u{1}'];
    (0..rng.gen_range(0..40)).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

pub fn random_request(rng: &mut impl Rng) -> WireRequest {
    match rng.gen_range(0..4) {
        0 => WireRequest::SubmitJob {
            qasm: random_string(rng),
            shots: rng.gen(),
            seed: rng.gen(),
        },
        1 => WireRequest::QueryStatus { job_id: rng.gen() },
        2 => WireRequest::FetchResult { job_id: rng.gen() },
        _ => WireRequest::Ping,
    }
}

pub fn random_response(rng: &mut impl Rng) -> WireResponse {
    const CODES: [ErrorCode; 7] = [
        ErrorCode::Parse,
        ErrorCode::BadRequest,
        ErrorCode::Capacity,
        ErrorCode::UnknownJob,
        ErrorCode::NotReady,
        ErrorCode::JobFailed,
        ErrorCode::ShuttingDown,
    ];
    const STATUSES: [JobStatus; 4] = [JobStatus::Queued, JobStatus::Running, JobStatus::Done, JobStatus::Failed];
    match rng.gen_range(0..5) {
        0 => WireResponse::Accepted { job_id: rng.gen() },
        1 => WireResponse::Status {
            job_id: rng.gen(),
            status: STATUSES[rng.gen_range(0..4)],
        },
        2 => {
            let n = rng.gen_range(1..=4);
            let mut counts: Vec<u64> = (0..1 << n).map(|_| rng.gen_range(0..1_000_000)).collect();
            counts[0] += 1;
            WireResponse::Result {
                job_id: rng.gen(),
                histogram: Histogram::from_counts(counts).unwrap(),
                server_wall_time_us: rng.gen(),
            }
        }
        3 => WireResponse::Error {
            code: CODES[rng.gen_range(0..CODES.len())],
            message: random_string(rng),
        },
        _ => WireResponse::Pong,
    }
}

/// Byte ranges of the lexical tokens in emitted QASM.
pub fn qasm_token_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        } else if b == b'"' {
            i += 1;
            while i < bytes.len() && bytes[i] != b'"' {
                i += 1;
            }
            i += 1;
        } else if b.is_ascii_alphanumeric() || b == b'_' || b == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || b"_.".contains(&bytes[i])) {
                i += 1;
            }
        } else if text[i..].starts_with("->") {
            i += 2;
        } else {
            i += 1;
        }
        spans.push((start, i));
    }
    spans
}
