//! OpenQASM 2.0 emission and parsing.
//!
//! The parser accepts the emitter's image plus π-expressions in gate
//! parameters: one `qreg`, one `creg` of equal size, `qelib1.inc` gates from
//! the supported set applied to indexed qubits, and a closing register-wide
//! `measure`. Everything else in the language is rejected with an
//! [`QasmErrorKind::Unsupported`] naming the construct.

use std::fmt;
use std::iter::Peekable;
use std::str::Chars;

use thiserror::Error;

use super::EmitError;
use crate::circuit::{Circuit, CircuitError, Gate, GateKind};

/// OpenQASM 2.0 source text with LF line endings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QasmProgram(String);

impl QasmProgram {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for QasmProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Serializes a finalized circuit. Parameters use the shortest decimal that
/// round-trips to the same `f64`.
pub fn emit_qasm(circuit: &Circuit) -> Result<QasmProgram, EmitError> {
    if !circuit.is_measured() {
        return Err(EmitError::Unfinalized);
    }
    let n = circuit.num_qubits();
    let mut out = String::with_capacity(64 + 16 * circuit.gates().len());
    out.push_str("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    out.push_str(&format!("qreg q[{n}];\ncreg c[{n}];\n"));
    for gate in circuit.gates() {
        out.push_str(gate.kind().mnemonic());
        if let Some(theta) = gate.param() {
            out.push_str(&format!("({theta})"));
        }
        let operands: Vec<String> = gate.targets().iter().map(|q| format!("q[{q}]")).collect();
        out.push(' ');
        out.push_str(&operands.join(","));
        out.push_str(";\n");
    }
    out.push_str("measure q -> c;\n");
    Ok(QasmProgram(out))
}

/// 1-based line and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{position}: {kind}")]
pub struct QasmError {
    pub position: Position,
    pub kind: QasmErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QasmErrorKind {
    #[error("lex error: {0}")]
    Lex(String),
    #[error("expected {expected}, found {found}")]
    Syntax { expected: String, found: String },
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("qreg has {qreg} qubits but creg has {creg} bits")]
    SizeMismatch { qreg: usize, creg: usize },
    #[error("index {index} out of range for register of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("undeclared register `{0}`")]
    UndeclaredRegister(String),
    #[error("program has no terminal `measure` statement")]
    MissingMeasure,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Number(s) => write!(f, "number `{s}`"),
            Tok::Str(s) => write!(f, "string \"{s}\""),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

struct Lexer<'a> {
    chars: Peekable<Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            chars: src.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn pos(&self) -> Position {
        Position {
            line: self.line,
            column: self.column,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) -> Result<(), QasmError> {
        loop {
            match self.chars.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') => {
                    let start = self.pos();
                    let mut ahead = self.chars.clone();
                    ahead.next();
                    match ahead.peek() {
                        Some('/') => {
                            while let Some(c) = self.bump() {
                                if c == '\n' {
                                    break;
                                }
                            }
                        }
                        Some('*') => {
                            self.bump();
                            self.bump();
                            let mut prev = '\0';
                            loop {
                                match self.bump() {
                                    Some('/') if prev == '*' => break,
                                    Some(c) => prev = c,
                                    None => {
                                        return Err(QasmError {
                                            position: start,
                                            kind: QasmErrorKind::Lex("unterminated block comment".into()),
                                        })
                                    }
                                }
                            }
                        }
                        _ => return Ok(()),
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn next_token(&mut self) -> Result<(Tok, Position), QasmError> {
        self.skip_trivia()?;
        let start = self.pos();
        let lex_err = |msg: String| QasmError {
            position: start,
            kind: QasmErrorKind::Lex(msg),
        };
        let Some(&c) = self.chars.peek() else {
            return Ok((Tok::Eof, start));
        };
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&c) = self.chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
            Tok::Ident(s)
        } else if c.is_ascii_digit() || c == '.' {
            Tok::Number(self.number().map_err(lex_err)?)
        } else if c == '"' {
            self.bump();
            let mut s = String::new();
            loop {
                match self.bump() {
                    Some('"') => break,
                    Some('\n') | None => return Err(lex_err("unterminated string literal".into())),
                    Some(c) => s.push(c),
                }
            }
            Tok::Str(s)
        } else {
            self.bump();
            let sym = match c {
                ';' => ";",
                ',' => ",",
                '[' => "[",
                ']' => "]",
                '(' => "(",
                ')' => ")",
                '{' => "{",
                '}' => "}",
                '+' => "+",
                '*' => "*",
                '/' => "/",
                '^' => "^",
                '-' => {
                    if self.chars.peek() == Some(&'>') {
                        self.bump();
                        "->"
                    } else {
                        "-"
                    }
                }
                '=' => {
                    if self.chars.peek() == Some(&'=') {
                        self.bump();
                        "=="
                    } else {
                        return Err(lex_err("unexpected character '='".into()));
                    }
                }
                other => return Err(lex_err(format!("unexpected character {other:?}"))),
            };
            Tok::Sym(sym)
        };
        Ok((tok, start))
    }

    fn number(&mut self) -> Result<String, String> {
        let mut s = String::new();
        let digits = |lexer: &mut Self, s: &mut String| {
            let mut any = false;
            while let Some(&c) = lexer.chars.peek() {
                if c.is_ascii_digit() {
                    s.push(c);
                    lexer.bump();
                    any = true;
                } else {
                    break;
                }
            }
            any
        };
        let int_part = digits(self, &mut s);
        let mut frac_part = false;
        if self.chars.peek() == Some(&'.') {
            s.push('.');
            self.bump();
            frac_part = digits(self, &mut s);
        }
        if !int_part && !frac_part {
            return Err(format!("malformed number `{s}`"));
        }
        if matches!(self.chars.peek(), Some('e' | 'E')) {
            s.push('e');
            self.bump();
            if let Some(&sign @ ('+' | '-')) = self.chars.peek() {
                s.push(sign);
                self.bump();
            }
            if !digits(self, &mut s) {
                return Err(format!("malformed exponent in `{s}`"));
            }
        }
        Ok(s)
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    current: Tok,
    current_pos: Position,
}

struct Registers {
    qreg: Option<(String, usize)>,
    creg: Option<(String, usize)>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, QasmError> {
        let mut lexer = Lexer::new(src);
        let (current, current_pos) = lexer.next_token()?;
        Ok(Self {
            lexer,
            current,
            current_pos,
        })
    }

    fn advance(&mut self) -> Result<(Tok, Position), QasmError> {
        let (next, pos) = self.lexer.next_token()?;
        let prev = std::mem::replace(&mut self.current, next);
        let prev_pos = std::mem::replace(&mut self.current_pos, pos);
        Ok((prev, prev_pos))
    }

    fn error(&self, kind: QasmErrorKind) -> QasmError {
        QasmError {
            position: self.current_pos,
            kind,
        }
    }

    fn unexpected(&self, expected: &str) -> QasmError {
        self.error(QasmErrorKind::Syntax {
            expected: expected.to_string(),
            found: self.current.to_string(),
        })
    }

    fn expect_sym(&mut self, sym: &'static str) -> Result<Position, QasmError> {
        if self.current == Tok::Sym(sym) {
            Ok(self.advance()?.1)
        } else {
            Err(self.unexpected(&format!("`{sym}`")))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Position), QasmError> {
        match &self.current {
            Tok::Ident(_) => match self.advance()? {
                (Tok::Ident(s), pos) => Ok((s, pos)),
                _ => unreachable!(),
            },
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn expect_index(&mut self) -> Result<(usize, Position), QasmError> {
        match &self.current {
            Tok::Number(text) if text.bytes().all(|b| b.is_ascii_digit()) => {
                let value = text.parse::<usize>().map_err(|_| {
                    self.error(QasmErrorKind::Lex(format!("integer `{text}` too large")))
                })?;
                Ok((value, self.advance()?.1))
            }
            _ => Err(self.unexpected("non-negative integer")),
        }
    }

    fn parse_program(mut self) -> Result<Circuit, QasmError> {
        self.header()?;
        let mut regs = Registers {
            qreg: None,
            creg: None,
        };
        let mut circuit: Option<Circuit> = None;
        loop {
            let pos = self.current_pos;
            let keyword = match &self.current {
                Tok::Eof => break,
                Tok::Ident(s) => s.clone(),
                _ => return Err(self.unexpected("statement")),
            };
            match keyword.as_str() {
                "qreg" => {
                    let (name, size) = self.register_decl("qreg", regs.qreg.is_some())?;
                    circuit = Some(
                        Circuit::new(size).map_err(|e| QasmError {
                            position: pos,
                            kind: e.into(),
                        })?,
                    );
                    regs.qreg = Some((name, size));
                    regs.check_sizes(pos)?;
                }
                "creg" => {
                    let decl = self.register_decl("creg", regs.creg.is_some())?;
                    regs.creg = Some(decl);
                    regs.check_sizes(pos)?;
                }
                "measure" => {
                    self.advance()?;
                    let c = Self::require_circuit(&mut circuit, &regs, pos)?;
                    let (q_name, q_pos) = self.expect_ident()?;
                    if self.current == Tok::Sym("[") {
                        return Err(self.error(QasmErrorKind::Unsupported(
                            "per-qubit measurement (only `measure q -> c;` is supported)".into(),
                        )));
                    }
                    regs.check_qreg(&q_name, q_pos)?;
                    self.expect_sym("->")?;
                    let (c_name, c_pos) = self.expect_ident()?;
                    if self.current == Tok::Sym("[") {
                        return Err(self.error(QasmErrorKind::Unsupported(
                            "per-qubit measurement (only `measure q -> c;` is supported)".into(),
                        )));
                    }
                    regs.check_creg(&c_name, c_pos)?;
                    self.expect_sym(";")?;
                    c.measure().map_err(|e| QasmError {
                        position: pos,
                        kind: e.into(),
                    })?;
                }
                "gate" | "opaque" | "if" | "barrier" | "reset" | "U" | "CX" | "include"
                | "OPENQASM" => {
                    return Err(self.error(QasmErrorKind::Unsupported(format!("`{keyword}` statement"))));
                }
                name => match GateKind::from_mnemonic(name) {
                    Some(kind) => {
                        let gate = self.gate_statement(kind, &regs)?;
                        let c = Self::require_circuit(&mut circuit, &regs, pos)?;
                        c.apply(gate).map_err(|e| QasmError {
                            position: pos,
                            kind: e.into(),
                        })?;
                    }
                    None => {
                        return Err(self.error(QasmErrorKind::Unsupported(format!("gate `{name}`"))));
                    }
                },
            }
        }
        let eof = self.current_pos;
        let missing = |what: &str| QasmError {
            position: eof,
            kind: QasmErrorKind::Syntax {
                expected: what.to_string(),
                found: "end of input".into(),
            },
        };
        let circuit = circuit.ok_or_else(|| missing("`qreg` declaration"))?;
        if regs.creg.is_none() {
            return Err(missing("`creg` declaration"));
        }
        if !circuit.is_measured() {
            return Err(QasmError {
                position: eof,
                kind: QasmErrorKind::MissingMeasure,
            });
        }
        Ok(circuit)
    }

    fn require_circuit<'c>(
        circuit: &'c mut Option<Circuit>,
        regs: &Registers,
        pos: Position,
    ) -> Result<&'c mut Circuit, QasmError> {
        let undeclared = |what: &str| QasmError {
            position: pos,
            kind: QasmErrorKind::Syntax {
                expected: format!("`{what}` declaration before this statement"),
                found: "statement".into(),
            },
        };
        if regs.creg.is_none() {
            return Err(undeclared("creg"));
        }
        circuit.as_mut().ok_or_else(|| undeclared("qreg"))
    }

    fn header(&mut self) -> Result<(), QasmError> {
        match &self.current {
            Tok::Ident(s) if s == "OPENQASM" => {
                self.advance()?;
            }
            _ => return Err(self.unexpected("`OPENQASM 2.0;` header")),
        }
        match &self.current {
            Tok::Number(v) if v.parse::<f64>() == Ok(2.0) => {
                self.advance()?;
            }
            Tok::Number(v) => {
                return Err(self.error(QasmErrorKind::Unsupported(format!("OpenQASM version {v}"))));
            }
            _ => return Err(self.unexpected("version number")),
        }
        self.expect_sym(";")?;
        match &self.current {
            Tok::Ident(s) if s == "include" => {
                self.advance()?;
            }
            _ => return Err(self.unexpected("`include \"qelib1.inc\";`")),
        }
        match &self.current {
            Tok::Str(s) if s == "qelib1.inc" => {
                self.advance()?;
            }
            Tok::Str(s) => {
                return Err(self.error(QasmErrorKind::Unsupported(format!("include of \"{s}\""))));
            }
            _ => return Err(self.unexpected("include path string")),
        }
        self.expect_sym(";")?;
        Ok(())
    }

    fn register_decl(&mut self, keyword: &str, already: bool) -> Result<(String, usize), QasmError> {
        if already {
            return Err(self.error(QasmErrorKind::Unsupported(format!("multiple `{keyword}` declarations"))));
        }
        self.advance()?;
        let (name, _) = self.expect_ident()?;
        self.expect_sym("[")?;
        let (size, _) = self.expect_index()?;
        self.expect_sym("]")?;
        self.expect_sym(";")?;
        Ok((name, size))
    }

    fn gate_statement(&mut self, kind: GateKind, regs: &Registers) -> Result<Gate, QasmError> {
        let (_, pos) = self.advance()?;
        let param = if self.current == Tok::Sym("(") {
            let open = self.advance()?.1;
            if !kind.is_rotation() {
                return Err(QasmError {
                    position: open,
                    kind: CircuitError::UnexpectedParameter { kind }.into(),
                });
            }
            let value = self.expr()?;
            self.expect_sym(")")?;
            Some(value)
        } else {
            None
        };
        let mut targets = Vec::with_capacity(2);
        loop {
            let (name, name_pos) = self.expect_ident()?;
            if self.current != Tok::Sym("[") {
                return Err(self.error(QasmErrorKind::Unsupported(
                    "register-wide gate application".into(),
                )));
            }
            regs.check_qreg(&name, name_pos)?;
            self.advance()?;
            let (index, index_pos) = self.expect_index()?;
            let size = regs.qreg.as_ref().map_or(0, |(_, s)| *s);
            if index >= size {
                return Err(QasmError {
                    position: index_pos,
                    kind: QasmErrorKind::IndexOutOfRange { index, size },
                });
            }
            self.expect_sym("]")?;
            targets.push(index);
            if self.current == Tok::Sym(",") {
                self.advance()?;
            } else {
                break;
            }
        }
        self.expect_sym(";")?;
        Gate::new(kind, &targets, param).map_err(|e| QasmError {
            position: pos,
            kind: e.into(),
        })
    }

    fn expr(&mut self) -> Result<f64, QasmError> {
        let mut value = self.term()?;
        loop {
            if self.current == Tok::Sym("+") {
                self.advance()?;
                value += self.term()?;
            } else if self.current == Tok::Sym("-") {
                self.advance()?;
                value -= self.term()?;
            } else {
                return Ok(value);
            }
        }
    }

    fn term(&mut self) -> Result<f64, QasmError> {
        let mut value = self.unary()?;
        loop {
            if self.current == Tok::Sym("*") {
                self.advance()?;
                value *= self.unary()?;
            } else if self.current == Tok::Sym("/") {
                self.advance()?;
                value /= self.unary()?;
            } else {
                return Ok(value);
            }
        }
    }

    fn unary(&mut self) -> Result<f64, QasmError> {
        if self.current == Tok::Sym("-") {
            self.advance()?;
            return Ok(-self.unary()?);
        }
        if self.current == Tok::Sym("+") {
            self.advance()?;
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<f64, QasmError> {
        match &self.current {
            Tok::Number(text) => {
                let value = text
                    .parse::<f64>()
                    .map_err(|_| self.error(QasmErrorKind::Lex(format!("malformed number `{text}`"))))?;
                self.advance()?;
                Ok(value)
            }
            Tok::Ident(name) if name == "pi" => {
                self.advance()?;
                Ok(std::f64::consts::PI)
            }
            Tok::Ident(name) => Err(self.error(QasmErrorKind::Unsupported(format!(
                "`{name}` in parameter expression"
            )))),
            Tok::Sym("(") => {
                self.advance()?;
                let value = self.expr()?;
                self.expect_sym(")")?;
                Ok(value)
            }
            _ => Err(self.unexpected("parameter expression")),
        }
    }
}

impl Registers {
    fn check_sizes(&self, pos: Position) -> Result<(), QasmError> {
        if let (Some((_, q)), Some((_, c))) = (&self.qreg, &self.creg) {
            if q != c {
                return Err(QasmError {
                    position: pos,
                    kind: QasmErrorKind::SizeMismatch { qreg: *q, creg: *c },
                });
            }
        }
        Ok(())
    }

    fn check_qreg(&self, name: &str, pos: Position) -> Result<(), QasmError> {
        match &self.qreg {
            Some((declared, _)) if declared == name => Ok(()),
            _ => Err(QasmError {
                position: pos,
                kind: QasmErrorKind::UndeclaredRegister(name.to_string()),
            }),
        }
    }

    fn check_creg(&self, name: &str, pos: Position) -> Result<(), QasmError> {
        match &self.creg {
            Some((declared, _)) if declared == name => Ok(()),
            _ => Err(QasmError {
                position: pos,
                kind: QasmErrorKind::UndeclaredRegister(name.to_string()),
            }),
        }
    }
}

/// Parses the supported OpenQASM 2.0 subset into a finalized circuit.
pub fn parse_qasm(text: &str) -> Result<Circuit, QasmError> {
    Parser::new(text)?.parse_program()
}
