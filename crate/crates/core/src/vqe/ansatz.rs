use serde::{Deserialize, Serialize};

use super::hamiltonian::{Pauli, PauliTerm};
use super::VqeError;
use crate::circuit::{Circuit, Gate};

/// Hardware-efficient ansatz: each layer is an RY on every qubit followed by
/// a ring of CX(i, i+1 mod n). The ring is omitted for a single qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub num_qubits: usize,
    pub layers: usize,
}

impl AnsatzSpec {
    pub fn new(num_qubits: usize, layers: usize) -> Self {
        Self { num_qubits, layers }
    }

    pub fn num_parameters(&self) -> usize {
        self.num_qubits * self.layers
    }

    /// Gate sequence without the measurement marker. `theta[l * n + q]` is
    /// the angle of the RY on qubit q in layer l.
    pub fn body(&self, theta: &[f64]) -> Result<Circuit, VqeError> {
        if theta.len() != self.num_parameters() {
            return Err(VqeError::ParameterCount {
                expected: self.num_parameters(),
                got: theta.len(),
            });
        }
        let n = self.num_qubits;
        let mut c = Circuit::new(n)?;
        for layer in theta.chunks(n) {
            for (q, &angle) in layer.iter().enumerate() {
                c.apply(Gate::ry(q, angle)?)?;
            }
            if n > 1 {
                for q in 0..n {
                    c.apply(Gate::cx(q, (q + 1) % n)?)?;
                }
            }
        }
        Ok(c)
    }
}

pub fn build_ansatz(spec: &AnsatzSpec, theta: &[f64]) -> Result<Circuit, VqeError> {
    let mut c = spec.body(theta)?;
    c.measure()?;
    Ok(c)
}

/// Rotates each qubit so the term's operator is measured in the
/// computational basis (X via H, Y via S† then H), then finalizes.
pub fn basis_change(body: &Circuit, term: &PauliTerm) -> Result<Circuit, VqeError> {
    if term.num_qubits() != body.num_qubits() {
        return Err(VqeError::QubitMismatch {
            circuit: body.num_qubits(),
            term: term.num_qubits(),
        });
    }
    let mut c = body.clone();
    for q in 0..c.num_qubits() {
        match term.on_qubit(q) {
            Pauli::X => {
                c.apply(Gate::h(q))?;
            }
            Pauli::Y => {
                c.apply(Gate::sdg(q))?;
                c.apply(Gate::h(q))?;
            }
            Pauli::I | Pauli::Z => {}
        }
    }
    c.measure()?;
    Ok(c)
}
