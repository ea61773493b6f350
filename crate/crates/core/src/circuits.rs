//! Parameterized circuits: gate ops, the convolution and pooling blocks, the
//! dense angle embedding, and QCNN assembly in both directions.
//!
//! A [`Circuit`] is a flat op list. Trainable angles are referenced through
//! parameter slots, so one parameter vector binds into the forward QCNN and
//! into its adjoint alike; the adjoint simply marks each slot reference as
//! negated.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{GateMatrix, PauliAxis, SimError, StateVector};

/// Number of embedded features per input.
pub const FEATURE_COUNT: usize = 16;
/// Wire read out for classification.
pub const OUTPUT_WIRE: usize = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("expected {expected} features, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("feature {index} = {value} lies outside [0, pi]")]
    FeatureRange { index: usize, value: f64 },
    #[error("{kind} block takes {expected} parameter slots, got {got}")]
    SlotCount {
        kind: String,
        expected: usize,
        got: usize,
    },
    #[error("parameter slot {slot} out of range for {param_count} parameters")]
    SlotOutOfRange { slot: usize, param_count: usize },
    #[error("wire {wire} out of range for a {n_qubits}-qubit circuit")]
    WireOutOfRange { wire: usize, n_qubits: usize },
    #[error("two-wire op on repeated wire {0}")]
    DuplicateWire(usize),
    #[error("parameter vector has length {got}, circuit expects {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("circuits act on {left} and {right} qubits")]
    QubitMismatch { left: usize, right: usize },
    #[error("class label must be 0 or 1, got {0}")]
    Label(u8),
    #[error("invalid ansatz configuration: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    /// `exp(-i a XX/2)`
    Rxx,
    /// `exp(-i a YY/2)`
    Ryy,
    /// `exp(-i a ZZ/2)`
    Rzz,
    /// Controlled RX; wires are (control, target).
    Crx,
    /// Controlled RZ; wires are (control, target).
    Crz,
    PauliX,
}

impl GateKind {
    pub fn n_wires(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::PauliX => 1,
            _ => 2,
        }
    }

    pub fn is_parameterized(self) -> bool {
        self != GateKind::PauliX
    }

    pub fn is_controlled(self) -> bool {
        matches!(self, GateKind::Crx | GateKind::Crz)
    }

    /// Generator axis of a rotation kind.
    fn axis(self) -> Option<PauliAxis> {
        match self {
            GateKind::Rx | GateKind::Rxx | GateKind::Crx => Some(PauliAxis::X),
            GateKind::Ry | GateKind::Ryy => Some(PauliAxis::Y),
            GateKind::Rz | GateKind::Rzz | GateKind::Crz => Some(PauliAxis::Z),
            GateKind::PauliX => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::Rxx => "RXX",
            GateKind::Ryy => "RYY",
            GateKind::Rzz => "RZZ",
            GateKind::Crx => "CRX",
            GateKind::Crz => "CRZ",
            GateKind::PauliX => "X",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "RX" => GateKind::Rx,
            "RY" => GateKind::Ry,
            "RZ" => GateKind::Rz,
            "RXX" => GateKind::Rxx,
            "RYY" => GateKind::Ryy,
            "RZZ" => GateKind::Rzz,
            "CRX" => GateKind::Crx,
            "CRZ" => GateKind::Crz,
            "X" => GateKind::PauliX,
            _ => return None,
        })
    }

    /// Matrix of the gate at the given angle (ignored for fixed kinds).
    pub fn matrix(self, angle: f64) -> GateMatrix {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz => {
                GateMatrix::rotation(self.axis().unwrap(), angle)
            }
            GateKind::Rxx | GateKind::Ryy | GateKind::Rzz => {
                GateMatrix::ising(self.axis().unwrap(), angle)
            }
            GateKind::Crx | GateKind::Crz => {
                match GateMatrix::rotation(self.axis().unwrap(), angle) {
                    GateMatrix::One(block) => GateMatrix::controlled(block),
                    GateMatrix::Two(_) => unreachable!(),
                }
            }
            GateKind::PauliX => GateMatrix::pauli(PauliAxis::X),
        }
    }

    /// `d/da` of [`matrix`](Self::matrix). Not unitary.
    pub fn derivative(self, angle: f64) -> Option<GateMatrix> {
        let axis = self.axis()?;
        // d/da exp(-i a P/2) = -sin(a/2)/2 I - i cos(a/2)/2 P
        let id_coef = Complex64::new(-(angle / 2.0).sin() / 2.0, 0.0);
        let p_coef = Complex64::new(0.0, -(angle / 2.0).cos() / 2.0);
        let zero = Complex64::new(0.0, 0.0);
        let d2 = |p: [[Complex64; 2]; 2]| {
            let mut m = [[zero; 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    m[r][c] = p_coef * p[r][c] + if r == c { id_coef } else { zero };
                }
            }
            m
        };
        Some(match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz => GateMatrix::one(d2(axis.matrix())),
            GateKind::Crx | GateKind::Crz => {
                GateMatrix::controlled_with([[zero; 2]; 2], d2(axis.matrix()))
            }
            GateKind::Rxx | GateKind::Ryy | GateKind::Rzz => {
                let pp =
                    GateMatrix::kron(&GateMatrix::pauli(axis), &GateMatrix::pauli(axis)).unwrap();
                let mut m = [[zero; 4]; 4];
                for (r, row) in m.iter_mut().enumerate() {
                    for (c, e) in row.iter_mut().enumerate() {
                        *e = p_coef * pp.entry(r, c) + if r == c { id_coef } else { zero };
                    }
                }
                GateMatrix::two(m)
            }
            GateKind::PauliX => unreachable!(),
        })
    }
}

/// Where a gate's angle comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    /// Read from the bound parameter vector, optionally negated.
    Slot {
        index: usize,
        negated: bool,
    },
    Fixed(f64),
}

impl Angle {
    pub fn slot(index: usize) -> Self {
        Angle::Slot {
            index,
            negated: false,
        }
    }

    pub fn resolve(&self, params: &[f64]) -> f64 {
        match *self {
            Angle::Slot {
                index,
                negated: false,
            } => params[index],
            Angle::Slot {
                index,
                negated: true,
            } => -params[index],
            Angle::Fixed(a) => a,
        }
    }

    fn negate(&self) -> Self {
        match *self {
            Angle::Slot { index, negated } => Angle::Slot {
                index,
                negated: !negated,
            },
            Angle::Fixed(a) => Angle::Fixed(-a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Op {
    pub kind: GateKind,
    wires: [usize; 2],
    pub angle: Option<Angle>,
}

impl Op {
    pub fn rotation(kind: GateKind, wire: usize, angle: Angle) -> Self {
        assert!(kind.n_wires() == 1 && kind.is_parameterized());
        Op {
            kind,
            wires: [wire, wire],
            angle: Some(angle),
        }
    }

    pub fn two_wire(kind: GateKind, first: usize, second: usize, angle: Angle) -> Self {
        assert!(kind.n_wires() == 2);
        Op {
            kind,
            wires: [first, second],
            angle: Some(angle),
        }
    }

    pub fn pauli_x(wire: usize) -> Self {
        Op {
            kind: GateKind::PauliX,
            wires: [wire, wire],
            angle: None,
        }
    }

    pub fn wires(&self) -> &[usize] {
        &self.wires[..self.kind.n_wires()]
    }

    pub fn slot(&self) -> Option<(usize, bool)> {
        match self.angle {
            Some(Angle::Slot { index, negated }) => Some((index, negated)),
            _ => None,
        }
    }

    fn bound_angle(&self, params: &[f64]) -> f64 {
        self.angle.map_or(0.0, |a| a.resolve(params))
    }

    pub fn adjoint(&self) -> Op {
        Op {
            angle: self.angle.map(|a| a.negate()),
            ..*self
        }
    }

    /// Applies the op at an explicit angle. Wires must already be validated.
    pub(crate) fn apply_at(&self, state: &mut StateVector, angle: f64) {
        match self.kind.matrix(angle) {
            GateMatrix::One(m) => state.apply_one(&m, self.wires[0]),
            GateMatrix::Two(m) => {
                if self.kind.is_controlled() {
                    let block = [[m[2][2], m[2][3]], [m[3][2], m[3][3]]];
                    state.apply_controlled(&block, self.wires[0], self.wires[1]);
                } else {
                    state.apply_two(&m, self.wires[0], self.wires[1]);
                }
            }
        }
    }

    pub(crate) fn apply(&self, state: &mut StateVector, params: &[f64]) {
        self.apply_at(state, self.bound_angle(params));
    }

    pub(crate) fn apply_inverse(&self, state: &mut StateVector, params: &[f64]) {
        self.apply_at(state, -self.bound_angle(params));
    }

    /// Replaces `state` by `dG/da |state>` at the bound angle.
    pub(crate) fn apply_derivative(&self, state: &mut StateVector, params: &[f64]) {
        let d = self
            .kind
            .derivative(self.bound_angle(params))
            .expect("derivative of a parameterized op");
        match d {
            GateMatrix::One(m) => state.apply_one(&m, self.wires[0]),
            GateMatrix::Two(m) => state.apply_two(&m, self.wires[0], self.wires[1]),
        }
    }

    pub fn matrix(&self, params: &[f64]) -> GateMatrix {
        self.kind.matrix(self.bound_angle(params))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    n_qubits: usize,
    param_count: usize,
    ops: Vec<Op>,
}

impl Circuit {
    pub fn new(n_qubits: usize, param_count: usize) -> Self {
        Circuit {
            n_qubits,
            param_count,
            ops: Vec::new(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn push(&mut self, op: Op) -> Result<(), CircuitError> {
        for &w in op.wires() {
            if w >= self.n_qubits {
                return Err(CircuitError::WireOutOfRange {
                    wire: w,
                    n_qubits: self.n_qubits,
                });
            }
        }
        if op.kind.n_wires() == 2 && op.wires[0] == op.wires[1] {
            return Err(CircuitError::DuplicateWire(op.wires[0]));
        }
        if let Some((slot, _)) = op.slot() {
            if slot >= self.param_count {
                return Err(CircuitError::SlotOutOfRange {
                    slot,
                    param_count: self.param_count,
                });
            }
        }
        self.ops.push(op);
        Ok(())
    }

    pub fn extend<I: IntoIterator<Item = Op>>(&mut self, ops: I) -> Result<(), CircuitError> {
        for op in ops {
            self.push(op)?;
        }
        Ok(())
    }

    /// `self` followed by `next`. The parameter space is the larger of the two.
    pub fn then(&self, next: &Circuit) -> Result<Circuit, CircuitError> {
        if self.n_qubits != next.n_qubits {
            return Err(CircuitError::QubitMismatch {
                left: self.n_qubits,
                right: next.n_qubits,
            });
        }
        let mut out = Circuit::new(self.n_qubits, self.param_count.max(next.param_count));
        out.ops = self.ops.iter().chain(&next.ops).copied().collect();
        Ok(out)
    }

    /// Reversed op order with every angle negated.
    pub fn adjoint(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            param_count: self.param_count,
            ops: self.ops.iter().rev().map(Op::adjoint).collect(),
        }
    }

    pub fn check_params(&self, params: &[f64]) -> Result<(), CircuitError> {
        if params.len() != self.param_count {
            return Err(CircuitError::ParamLength {
                expected: self.param_count,
                got: params.len(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, state: &mut StateVector, params: &[f64]) -> Result<(), CircuitError> {
        self.check_params(params)?;
        if state.n_qubits() != self.n_qubits {
            return Err(CircuitError::QubitMismatch {
                left: self.n_qubits,
                right: state.n_qubits(),
            });
        }
        for op in &self.ops {
            op.apply(state, params);
        }
        Ok(())
    }

    /// Runs the circuit on the ground state.
    pub fn run(&self, params: &[f64]) -> Result<StateVector, CircuitError> {
        let mut state = StateVector::ground(self.n_qubits)?;
        self.apply(&mut state, params)?;
        Ok(state)
    }

    /// Runs with op `op_index` evaluated at its bound angle plus `delta`.
    pub(crate) fn run_shifted(
        &self,
        params: &[f64],
        op_index: usize,
        delta: f64,
    ) -> Result<StateVector, CircuitError> {
        self.check_params(params)?;
        let mut state = StateVector::ground(self.n_qubits)?;
        for (i, op) in self.ops.iter().enumerate() {
            if i == op_index {
                op.apply_at(&mut state, op.bound_angle(params) + delta);
            } else {
                op.apply(&mut state, params);
            }
        }
        Ok(state)
    }

    /// Parses the line format produced by `Display`.
    pub fn from_text(s: &str) -> Result<Circuit, CircuitError> {
        s.parse()
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "qubits {}", self.n_qubits)?;
        writeln!(f, "params {}", self.param_count)?;
        for op in &self.ops {
            f.write_str(op.kind.name())?;
            for w in op.wires() {
                write!(f, " {w}")?;
            }
            match op.angle {
                Some(Angle::Slot {
                    index,
                    negated: false,
                }) => write!(f, " s{index}")?,
                Some(Angle::Slot {
                    index,
                    negated: true,
                }) => write!(f, " -s{index}")?,
                Some(Angle::Fixed(a)) => write!(f, " @{a:?}")?,
                None => {}
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for Circuit {
    type Err = CircuitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |line: usize, msg: &str| CircuitError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = s
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut header = |key: &str| -> Result<usize, CircuitError> {
            let (n, line) = lines.next().ok_or_else(|| err(0, "missing header"))?;
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| err(n, &format!("expected `{key} <n>`")))?;
            rest.trim().parse().map_err(|_| err(n, "bad header value"))
        };
        let n_qubits = header("qubits")?;
        let param_count = header("params")?;
        let mut circuit = Circuit::new(n_qubits, param_count);
        for (n, line) in lines {
            let mut toks = line.split_whitespace();
            let kind =
                GateKind::from_name(toks.next().unwrap()).ok_or_else(|| err(n, "unknown gate"))?;
            let mut wires = [0usize; 2];
            for w in wires.iter_mut().take(kind.n_wires()) {
                *w = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err(n, "missing or bad wire index"))?;
            }
            if kind.n_wires() == 1 {
                wires[1] = wires[0];
            }
            let angle = if kind.is_parameterized() {
                let t = toks.next().ok_or_else(|| err(n, "missing angle"))?;
                Some(if let Some(v) = t.strip_prefix('@') {
                    Angle::Fixed(v.parse().map_err(|_| err(n, "bad fixed angle"))?)
                } else {
                    let (negated, rest) = match t.strip_prefix('-') {
                        Some(r) => (true, r),
                        None => (false, t),
                    };
                    let index = rest
                        .strip_prefix('s')
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(n, "bad slot reference"))?;
                    Angle::Slot { index, negated }
                })
            } else {
                None
            };
            if toks.next().is_some() {
                return Err(err(n, "trailing tokens"));
            }
            circuit
                .push(Op { kind, wires, angle })
                .map_err(|e| err(n, &e.to_string()))?;
        }
        Ok(circuit)
    }
}

/// Convolution block variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConvKind {
    Cnn7,
    Cnn8,
    Cnn9,
}

impl ConvKind {
    pub const ALL: [ConvKind; 3] = [ConvKind::Cnn7, ConvKind::Cnn8, ConvKind::Cnn9];

    pub fn param_count(self) -> usize {
        match self {
            ConvKind::Cnn7 | ConvKind::Cnn8 => 10,
            ConvKind::Cnn9 => 15,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ConvKind::Cnn7 => "CNN7",
            ConvKind::Cnn8 => "CNN8",
            ConvKind::Cnn9 => "CNN9",
        }
    }
}

impl fmt::Display for ConvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cnn7" | "7" => Ok(ConvKind::Cnn7),
            "cnn8" | "8" => Ok(ConvKind::Cnn8),
            "cnn9" | "9" => Ok(ConvKind::Cnn9),
            _ => Err(format!(
                "unknown convolution kind `{s}` (expected cnn7, cnn8 or cnn9)"
            )),
        }
    }
}

pub const POOL_PARAMS: usize = 2;

/// Training direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reversed,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reversed => "reversed",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "forward" | "standard" | "vqc" => Ok(Direction::Forward),
            "reversed" | "reverse" | "revqc" => Ok(Direction::Reversed),
            _ => Err(format!(
                "unknown direction `{s}` (expected forward or reversed)"
            )),
        }
    }
}

fn check_slots(kind: &str, expected: usize, slots: &[usize]) -> Result<(), CircuitError> {
    if slots.len() != expected {
        return Err(CircuitError::SlotCount {
            kind: kind.to_string(),
            expected,
            got: slots.len(),
        });
    }
    Ok(())
}

/// The two-wire convolution block on `(a, b)` reading the given slots.
pub fn conv_block(
    kind: ConvKind,
    (a, b): (usize, usize),
    slots: &[usize],
) -> Result<Vec<Op>, CircuitError> {
    check_slots(kind.name(), kind.param_count(), slots)?;
    let s = |i: usize| Angle::slot(slots[i]);
    let ops = match kind {
        ConvKind::Cnn7 | ConvKind::Cnn8 => {
            let entangler = if kind == ConvKind::Cnn7 {
                GateKind::Crz
            } else {
                GateKind::Crx
            };
            vec![
                Op::rotation(GateKind::Rx, a, s(0)),
                Op::rotation(GateKind::Rx, b, s(1)),
                Op::rotation(GateKind::Rz, a, s(2)),
                Op::rotation(GateKind::Rz, b, s(3)),
                Op::two_wire(entangler, b, a, s(4)),
                Op::rotation(GateKind::Rx, a, s(5)),
                Op::rotation(GateKind::Rx, b, s(6)),
                Op::rotation(GateKind::Rz, a, s(7)),
                Op::rotation(GateKind::Rz, b, s(8)),
                Op::two_wire(entangler, a, b, s(9)),
            ]
        }
        ConvKind::Cnn9 => {
            // general rotation RZ.RY.RZ on each wire, the canonical
            // XX/YY/ZZ interaction, then another general rotation per wire
            let general = |wire: usize, first: usize| {
                [
                    Op::rotation(GateKind::Rz, wire, s(first)),
                    Op::rotation(GateKind::Ry, wire, s(first + 1)),
                    Op::rotation(GateKind::Rz, wire, s(first + 2)),
                ]
            };
            let mut ops = Vec::with_capacity(15);
            ops.extend(general(a, 0));
            ops.extend(general(b, 3));
            ops.push(Op::two_wire(GateKind::Rxx, a, b, s(6)));
            ops.push(Op::two_wire(GateKind::Ryy, a, b, s(7)));
            ops.push(Op::two_wire(GateKind::Rzz, a, b, s(8)));
            ops.extend(general(a, 9));
            ops.extend(general(b, 12));
            ops
        }
    };
    Ok(ops)
}

/// Pooling block on `(kept, dropped)`: CRZ and CRX controlled by the dropped
/// wire with a bit flip in between.
pub fn pooling_block(
    (kept, dropped): (usize, usize),
    slots: &[usize],
) -> Result<Vec<Op>, CircuitError> {
    check_slots("pooling", POOL_PARAMS, slots)?;
    Ok(vec![
        Op::two_wire(GateKind::Crz, dropped, kept, Angle::slot(slots[0])),
        Op::pauli_x(dropped),
        Op::two_wire(GateKind::Crx, dropped, kept, Angle::slot(slots[1])),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnsatzConfig {
    pub conv_kind: ConvKind,
    pub n_qubits: usize,
    pub n_layers: usize,
    pub direction: Direction,
    /// Include the (last, first) pair in each convolution layer.
    pub wrap_around: bool,
}

impl AnsatzConfig {
    /// The 8-wire, 3-layer shape used for classification.
    pub fn new(conv_kind: ConvKind, direction: Direction) -> Self {
        AnsatzConfig {
            conv_kind,
            n_qubits: 8,
            n_layers: 3,
            direction,
            wrap_around: true,
        }
    }

    pub fn layer_params(&self) -> usize {
        self.conv_kind.param_count() + POOL_PARAMS
    }

    pub fn param_count(&self) -> usize {
        self.n_layers * self.layer_params()
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.n_layers == 0 || self.n_layers > 4 {
            return Err(CircuitError::Config(format!(
                "{} layers not supported",
                self.n_layers
            )));
        }
        if self.n_qubits != 1 << self.n_layers {
            return Err(CircuitError::Config(format!(
                "{} layers need {} qubits, got {}",
                self.n_layers,
                1usize << self.n_layers,
                self.n_qubits
            )));
        }
        Ok(())
    }
}

/// Wiring of one QCNN layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPlan {
    pub conv_pairs: Vec<(usize, usize)>,
    pub pool_pairs: Vec<(usize, usize)>,
    pub active_after: Vec<usize>,
}

/// Per-layer wiring: convolutions on even then odd neighbouring pairs of the
/// active wires (a ring when `wrap_around`), then pooling on every other pair
/// keeping the first wire.
pub fn layer_plan(config: &AnsatzConfig) -> Result<Vec<LayerPlan>, CircuitError> {
    config.validate()?;
    let mut active: Vec<usize> = (0..config.n_qubits).collect();
    let mut plan = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        let n = active.len();
        let mut conv_pairs: Vec<(usize, usize)> = (0..n)
            .step_by(2)
            .map(|i| (active[i], active[i + 1]))
            .collect();
        conv_pairs.extend(
            (1..n.saturating_sub(1))
                .step_by(2)
                .map(|i| (active[i], active[i + 1])),
        );
        if config.wrap_around && n > 2 {
            conv_pairs.push((active[n - 1], active[0]));
        }
        let pool_pairs: Vec<(usize, usize)> = (0..n)
            .step_by(2)
            .map(|i| (active[i], active[i + 1]))
            .collect();
        active = pool_pairs.iter().map(|p| p.0).collect();
        plan.push(LayerPlan {
            conv_pairs,
            pool_pairs,
            active_after: active.clone(),
        });
    }
    Ok(plan)
}

/// The forward QCNN: per layer, shared-slot convolutions then pooling.
pub fn build_qcnn(config: &AnsatzConfig) -> Result<Circuit, CircuitError> {
    let plan = layer_plan(config)?;
    let mut circuit = Circuit::new(config.n_qubits, config.param_count());
    let conv_n = config.conv_kind.param_count();
    for (layer, lp) in plan.iter().enumerate() {
        let base = layer * config.layer_params();
        let conv_slots: Vec<usize> = (base..base + conv_n).collect();
        let pool_slots = [base + conv_n, base + conv_n + 1];
        for &pair in &lp.conv_pairs {
            circuit.extend(conv_block(config.conv_kind, pair, &conv_slots)?)?;
        }
        for &pair in &lp.pool_pairs {
            circuit.extend(pooling_block(pair, &pool_slots)?)?;
        }
    }
    Ok(circuit)
}

/// RX(f_i) on wire i, then RY(f_{n+i}) on wire i, for `n_qubits` wires and
/// `2 * n_qubits` features in `[0, pi]`.
pub fn dense_angle_embedding_on(
    n_qubits: usize,
    features: &[f64],
) -> Result<Circuit, CircuitError> {
    if features.len() != 2 * n_qubits {
        return Err(CircuitError::FeatureCount {
            expected: 2 * n_qubits,
            got: features.len(),
        });
    }
    for (index, &value) in features.iter().enumerate() {
        // NaN fails this test too
        if !(0.0..=PI).contains(&value) {
            return Err(CircuitError::FeatureRange { index, value });
        }
    }
    let mut circuit = Circuit::new(n_qubits, 0);
    for w in 0..n_qubits {
        circuit.push(Op::rotation(GateKind::Rx, w, Angle::Fixed(features[w])))?;
    }
    for w in 0..n_qubits {
        circuit.push(Op::rotation(
            GateKind::Ry,
            w,
            Angle::Fixed(features[n_qubits + w]),
        ))?;
    }
    Ok(circuit)
}

/// Dense angle embedding of [`FEATURE_COUNT`] features on eight wires.
pub fn dense_angle_embedding(features: &[f64]) -> Result<Circuit, CircuitError> {
    if features.len() != FEATURE_COUNT {
        return Err(CircuitError::FeatureCount {
            expected: FEATURE_COUNT,
            got: features.len(),
        });
    }
    dense_angle_embedding_on(FEATURE_COUNT / 2, features)
}

/// Class 0 leaves the register in `|0...0>`; class 1 flips the output wire.
pub fn target_encoding(n_qubits: usize, label: u8) -> Result<Circuit, CircuitError> {
    let mut circuit = Circuit::new(n_qubits, 0);
    match label {
        0 => {}
        1 => circuit.push(Op::pauli_x(OUTPUT_WIRE))?,
        other => return Err(CircuitError::Label(other)),
    }
    Ok(circuit)
}

/// Embedding followed by the QCNN: the inference circuit.
pub fn build_forward(config: &AnsatzConfig, features: &[f64]) -> Result<Circuit, CircuitError> {
    let embed = dense_angle_embedding_on(config.n_qubits, features)?;
    embed.then(&build_qcnn(config)?)
}

/// Target encoding, then the adjoint QCNN, then the adjoint embedding.
pub fn build_reversed(
    config: &AnsatzConfig,
    features: &[f64],
    label: u8,
) -> Result<Circuit, CircuitError> {
    let embed = dense_angle_embedding_on(config.n_qubits, features)?;
    let qcnn = build_qcnn(config)?;
    target_encoding(config.n_qubits, label)?
        .then(&qcnn.adjoint())?
        .then(&embed.adjoint())
}

/// Reversed circuit without the embedding, as used to read off class centres.
pub fn build_reversed_unembedded(
    config: &AnsatzConfig,
    label: u8,
) -> Result<Circuit, CircuitError> {
    target_encoding(config.n_qubits, label)?.then(&build_qcnn(config)?.adjoint())
}
