use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HamiltonianError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid Pauli string `{0}` (expected characters I, X, Y, Z)")]
    BadOperator(String),
    #[error("coefficient {0} is not finite")]
    NonFinite(f64),
    #[error("term `{term}` has {got} operators, expected {expected}")]
    LengthMismatch {
        term: String,
        expected: usize,
        got: usize,
    },
    #[error("hamiltonian has no terms")]
    Empty,
}

/// Weighted Pauli string. Character j of the string acts on qubit n-1-j, so
/// the string reads most significant qubit first like a histogram bitstring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    coefficient: f64,
    operators: Vec<Pauli>,
}

impl PauliTerm {
    pub fn new(coefficient: f64, operators: &str) -> Result<Self, HamiltonianError> {
        if !coefficient.is_finite() {
            return Err(HamiltonianError::NonFinite(coefficient));
        }
        let ops = operators
            .chars()
            .map(Pauli::from_char)
            .collect::<Option<Vec<_>>>()
            .filter(|ops| !ops.is_empty())
            .ok_or_else(|| HamiltonianError::BadOperator(operators.to_string()))?;
        Ok(Self {
            coefficient,
            operators: ops,
        })
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn num_qubits(&self) -> usize {
        self.operators.len()
    }

    /// Operator acting on `qubit`.
    pub fn on_qubit(&self, qubit: usize) -> Pauli {
        self.operators[self.operators.len() - 1 - qubit]
    }

    pub fn is_identity(&self) -> bool {
        self.operators.iter().all(|&p| p == Pauli::I)
    }

    /// Bit mask of the qubits carrying a non-identity operator.
    pub fn support_mask(&self) -> usize {
        (0..self.num_qubits())
            .filter(|&q| self.on_qubit(q) != Pauli::I)
            .fold(0, |m, q| m | 1 << q)
    }

    pub fn operator_string(&self) -> String {
        self.operators.iter().map(|p| p.as_char()).collect()
    }
}

impl fmt::Display for PauliTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.coefficient, self.operator_string())
    }
}

/// Sum of Pauli terms over a fixed register; duplicate strings are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hamiltonian {
    num_qubits: usize,
    terms: Vec<PauliTerm>,
}

impl Hamiltonian {
    pub fn new(terms: Vec<PauliTerm>) -> Result<Self, HamiltonianError> {
        let first = terms.first().ok_or(HamiltonianError::Empty)?;
        let num_qubits = first.num_qubits();
        // Merge duplicates, keeping first-seen order.
        let mut order: Vec<Vec<Pauli>> = Vec::new();
        let mut sums: BTreeMap<Vec<Pauli>, f64> = BTreeMap::new();
        for term in terms {
            if term.num_qubits() != num_qubits {
                return Err(HamiltonianError::LengthMismatch {
                    term: term.operator_string(),
                    expected: num_qubits,
                    got: term.num_qubits(),
                });
            }
            match sums.get_mut(&term.operators) {
                Some(sum) => *sum += term.coefficient,
                None => {
                    order.push(term.operators.clone());
                    sums.insert(term.operators, term.coefficient);
                }
            }
        }
        let terms = order
            .into_iter()
            .map(|ops| PauliTerm {
                coefficient: sums[&ops],
                operators: ops,
            })
            .collect();
        Ok(Self { num_qubits, terms })
    }

    /// Parses one `coefficient operator-string` term per line; `#` starts a
    /// comment.
    pub fn parse(text: &str) -> Result<Self, HamiltonianError> {
        let mut terms = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| HamiltonianError::Syntax { line: i + 1, message };
            let mut fields = line.split_whitespace();
            let (Some(coeff), Some(ops), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(syntax(format!("expected `coefficient operators`, got `{line}`")));
            };
            let coefficient: f64 = coeff
                .parse()
                .map_err(|_| syntax(format!("bad coefficient `{coeff}`")))?;
            let term = PauliTerm::new(coefficient, ops).map_err(|e| syntax(e.to_string()))?;
            terms.push(term);
        }
        Self::new(terms)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    /// Σ|c|, the largest possible |⟨H⟩|.
    pub fn coefficient_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.abs()).sum()
    }
}

impl FromStr for Hamiltonian {
    type Err = HamiltonianError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}
