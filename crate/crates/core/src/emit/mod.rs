//! Transpilation to OpenQASM 2.0 and QIR text, and OpenQASM 2.0 parsing.

mod qasm;
mod qir;

use thiserror::Error;

pub use qasm::{emit_qasm, parse_qasm, Position, QasmError, QasmErrorKind, QasmProgram};
pub use qir::{check_qir_shape, emit_qir, QirCall, QirOperand, QirProgram, QirShape, QirShapeError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmitError {
    #[error("circuit must be finalized with a terminal measurement before emission")]
    Unfinalized,
}
