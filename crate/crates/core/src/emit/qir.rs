//! QIR text emission and a structural checker for the emitted shape.

use std::fmt;

use thiserror::Error;

use super::EmitError;
use crate::circuit::{Circuit, GateKind};

/// QIR (LLVM IR text) program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QirProgram(String);

impl QirProgram {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for QirProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn intrinsic(kind: GateKind) -> &'static str {
    match kind {
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
        GateKind::Cx => "cnot",
        GateKind::Cz => "cz",
        GateKind::Swap => "swap",
    }
}

fn pointer(ty: &str, index: usize) -> String {
    if index == 0 {
        format!("%{ty}* null")
    } else {
        format!("%{ty}* inttoptr (i64 {index} to %{ty}*)")
    }
}

/// Lowers a finalized circuit to base-profile style QIR text: static qubit
/// and result addresses, one intrinsic call per gate, one `mz` per qubit.
pub fn emit_qir(circuit: &Circuit) -> Result<QirProgram, EmitError> {
    if !circuit.is_measured() {
        return Err(EmitError::Unfinalized);
    }
    let mut body = String::new();
    let mut used: Vec<GateKind> = Vec::new();
    for gate in circuit.gates() {
        let mut operands: Vec<String> = Vec::with_capacity(3);
        if let Some(theta) = gate.param() {
            operands.push(format!("double {theta:e}"));
        }
        operands.extend(gate.targets().iter().map(|&q| pointer("Qubit", q)));
        body.push_str(&format!(
            "  call void @__quantum__qis__{}__body({})\n",
            intrinsic(gate.kind()),
            operands.join(", ")
        ));
        if !used.contains(&gate.kind()) {
            used.push(gate.kind());
        }
    }
    for q in 0..circuit.num_qubits() {
        body.push_str(&format!(
            "  call void @__quantum__qis__mz__body({}, {})\n",
            pointer("Qubit", q),
            pointer("Result", q)
        ));
    }

    let mut out = String::new();
    out.push_str("%Qubit = type opaque\n%Result = type opaque\n\n");
    out.push_str("define void @main() #0 {\nentry:\n");
    out.push_str(&body);
    out.push_str("  ret void\n}\n\n");
    for kind in used {
        let mut params: Vec<&str> = Vec::new();
        if kind.is_rotation() {
            params.push("double");
        }
        params.extend(std::iter::repeat_n("%Qubit*", kind.arity()));
        out.push_str(&format!(
            "declare void @__quantum__qis__{}__body({})\n",
            intrinsic(kind),
            params.join(", ")
        ));
    }
    out.push_str("declare void @__quantum__qis__mz__body(%Qubit*, %Result*)\n\n");
    out.push_str("attributes #0 = { \"entry_point\" }\n");
    Ok(QirProgram(out))
}

#[derive(Debug, Clone, PartialEq)]
pub enum QirOperand {
    Double(f64),
    Qubit(usize),
    Result(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QirCall {
    /// Intrinsic name between `__quantum__qis__` and `__body`.
    pub intrinsic: String,
    pub operands: Vec<QirOperand>,
}

/// The calls found in the entry block, in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QirShape {
    pub calls: Vec<QirCall>,
}

impl QirShape {
    pub fn gate_calls(&self) -> impl Iterator<Item = &QirCall> {
        self.calls.iter().filter(|c| c.intrinsic != "mz")
    }

    pub fn measure_calls(&self) -> impl Iterator<Item = &QirCall> {
        self.calls.iter().filter(|c| c.intrinsic == "mz")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct QirShapeError {
    pub line: usize,
    pub message: String,
}

/// Checks the structure produced by [`emit_qir`]: exactly one
/// `define void @main() #0 {` followed by `entry:`, intrinsic calls whose
/// operand lists parse, and a closing `ret void` / `}`.
pub fn check_qir_shape(text: &str) -> Result<QirShape, QirShapeError> {
    let err = |line: usize, message: String| QirShapeError { line, message };
    let lines: Vec<&str> = text.lines().collect();
    let defines: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with("define "))
        .map(|(i, _)| i)
        .collect();
    let start = match defines.as_slice() {
        [i] if lines[*i] == "define void @main() #0 {" => *i,
        [i] => return Err(err(i + 1, format!("unexpected entry signature `{}`", lines[*i]))),
        [] => return Err(err(0, "no `define void @main() #0 {`".into())),
        _ => return Err(err(defines[1] + 1, "more than one function definition".into())),
    };
    if lines.get(start + 1) != Some(&"entry:") {
        return Err(err(start + 2, "expected `entry:` label".into()));
    }
    let mut shape = QirShape::default();
    let mut i = start + 2;
    loop {
        let Some(line) = lines.get(i) else {
            return Err(err(i, "entry block not terminated by `ret void`".into()));
        };
        let trimmed = line.trim();
        if trimmed == "ret void" {
            break;
        }
        shape.calls.push(parse_call(trimmed).map_err(|m| err(i + 1, m))?);
        i += 1;
    }
    if lines.get(i + 1) != Some(&"}") {
        return Err(err(i + 2, "expected `}` after `ret void`".into()));
    }
    Ok(shape)
}

fn parse_call(line: &str) -> Result<QirCall, String> {
    let rest = line
        .strip_prefix("call void @__quantum__qis__")
        .ok_or_else(|| format!("not an intrinsic call: `{line}`"))?;
    let (name, args) = rest
        .split_once("__body(")
        .ok_or_else(|| format!("missing `__body(` in `{line}`"))?;
    let args = args
        .strip_suffix(')')
        .ok_or_else(|| format!("unterminated operand list in `{line}`"))?;
    let operands = split_operands(args)
        .into_iter()
        .map(parse_operand)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QirCall {
        intrinsic: name.to_string(),
        operands,
    })
}

/// Splits on commas outside parentheses.
fn split_operands(args: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut begin = 0;
    for (i, c) in args.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(args[begin..i].trim());
                begin = i + 1;
            }
            _ => {}
        }
    }
    if !args.trim().is_empty() {
        out.push(args[begin..].trim());
    }
    out
}

fn parse_operand(op: &str) -> Result<QirOperand, String> {
    if let Some(v) = op.strip_prefix("double ") {
        return v
            .parse::<f64>()
            .map(QirOperand::Double)
            .map_err(|_| format!("bad double operand `{op}`"));
    }
    for (ty, make) in [
        ("Qubit", QirOperand::Qubit as fn(usize) -> QirOperand),
        ("Result", QirOperand::Result),
    ] {
        let Some(rest) = op.strip_prefix(&format!("%{ty}* ")) else {
            continue;
        };
        if rest == "null" {
            return Ok(make(0));
        }
        let index = rest
            .strip_prefix("inttoptr (i64 ")
            .and_then(|r| r.strip_suffix(&format!(" to %{ty}*)")))
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("bad {ty} pointer operand `{op}`"))?;
        return Ok(make(index));
    }
    Err(format!("unrecognized operand `{op}`"))
}
