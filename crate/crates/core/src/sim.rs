//! Dense statevector simulation.
//!
//! Basis-index convention: wire 0 is the most significant bit of the basis
//! index, so on three wires `|w0 w1 w2>` lives at index `4*w0 + 2*w1 + w2`.
//! Two-wire gate matrices use the same ordering over their own wires: the
//! first wire passed to [`StateVector::apply_gate`] is the high bit of the
//! 4x4 row/column index.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 24;
/// Allowed drift of the squared norm after construction or a gate.
pub const NORM_TOL: f64 = 1e-10;
/// Allowed deviation of `U^dagger U` from the identity.
pub const UNITARY_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("register of {0} qubits is outside the supported range 1..={MAX_QUBITS}")]
    QubitCount(usize),
    #[error("wire {wire} out of range for a {n_qubits}-qubit register")]
    WireOutOfRange { wire: usize, n_qubits: usize },
    #[error("gate acts on {gate_wires} wire(s) but {given} wire index(es) were given")]
    WireCount { gate_wires: usize, given: usize },
    #[error("two-wire gate applied to the same wire {0} twice")]
    DuplicateWire(usize),
    #[error("amplitude vector of length {0} is not a power of two")]
    BadLength(usize),
    #[error("amplitudes have squared norm {0}, expected 1")]
    NotNormalized(f64),
}

/// One of the three Pauli operators, used both as a measurement axis and as a
/// rotation generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 3] = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];

    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        match self {
            PauliAxis::X => [[ZERO, ONE], [ONE, ZERO]],
            PauliAxis::Y => [[ZERO, -I], [I, ZERO]],
            PauliAxis::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }
}

impl fmt::Display for PauliAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PauliAxis::X => "X",
            PauliAxis::Y => "Y",
            PauliAxis::Z => "Z",
        };
        f.write_str(s)
    }
}

/// A one- or two-wire gate matrix.
///
/// Matrices built through the named constructors are unitary; the derivative
/// matrices used by the gradient engine are built with [`GateMatrix::one`] /
/// [`GateMatrix::two`] directly and need not be.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMatrix {
    One([[Complex64; 2]; 2]),
    Two([[Complex64; 4]; 4]),
}

impl GateMatrix {
    pub fn one(m: [[Complex64; 2]; 2]) -> Self {
        GateMatrix::One(m)
    }

    pub fn two(m: [[Complex64; 4]; 4]) -> Self {
        GateMatrix::Two(m)
    }

    pub fn identity(n_wires: usize) -> Self {
        if n_wires == 1 {
            GateMatrix::One([[ONE, ZERO], [ZERO, ONE]])
        } else {
            let mut m = [[ZERO; 4]; 4];
            for (i, row) in m.iter_mut().enumerate() {
                row[i] = ONE;
            }
            GateMatrix::Two(m)
        }
    }

    pub fn pauli(axis: PauliAxis) -> Self {
        GateMatrix::One(axis.matrix())
    }

    /// `exp(-i theta sigma / 2)`.
    pub fn rotation(axis: PauliAxis, theta: f64) -> Self {
        let c = Complex64::new((theta / 2.0).cos(), 0.0);
        let s = (theta / 2.0).sin();
        let p = axis.matrix();
        let mut m = [[ZERO; 2]; 2];
        for r in 0..2 {
            for col in 0..2 {
                let id = if r == col { c } else { ZERO };
                m[r][col] = id - I * s * p[r][col];
            }
        }
        GateMatrix::One(m)
    }

    pub fn rx(theta: f64) -> Self {
        Self::rotation(PauliAxis::X, theta)
    }

    pub fn ry(theta: f64) -> Self {
        Self::rotation(PauliAxis::Y, theta)
    }

    pub fn rz(theta: f64) -> Self {
        Self::rotation(PauliAxis::Z, theta)
    }

    /// `exp(-i theta (sigma (x) sigma) / 2)` on two wires.
    pub fn ising(axis: PauliAxis, theta: f64) -> Self {
        let p = axis.matrix();
        let pp = kron2(&p, &p);
        let c = Complex64::new((theta / 2.0).cos(), 0.0);
        let s = (theta / 2.0).sin();
        let mut m = [[ZERO; 4]; 4];
        for r in 0..4 {
            for col in 0..4 {
                let id = if r == col { c } else { ZERO };
                m[r][col] = id - I * s * pp[r][col];
            }
        }
        GateMatrix::Two(m)
    }

    /// Embeds a single-wire block as the `|1>` branch of a controlled gate.
    /// The control is the first wire, the target the second.
    pub fn controlled(block: [[Complex64; 2]; 2]) -> Self {
        Self::controlled_with(GateMatrix::identity(1).as_one(), block)
    }

    /// `|0><0| (x) zero_branch + |1><1| (x) one_branch`.
    pub fn controlled_with(
        zero_branch: [[Complex64; 2]; 2],
        one_branch: [[Complex64; 2]; 2],
    ) -> Self {
        let mut m = [[ZERO; 4]; 4];
        for r in 0..2 {
            for c in 0..2 {
                m[r][c] = zero_branch[r][c];
                m[r + 2][c + 2] = one_branch[r][c];
            }
        }
        GateMatrix::Two(m)
    }

    pub fn kron(a: &GateMatrix, b: &GateMatrix) -> Option<GateMatrix> {
        match (a, b) {
            (GateMatrix::One(a), GateMatrix::One(b)) => Some(GateMatrix::Two(kron2(a, b))),
            _ => None,
        }
    }

    pub fn n_wires(&self) -> usize {
        match self {
            GateMatrix::One(_) => 1,
            GateMatrix::Two(_) => 2,
        }
    }

    pub fn dimension(&self) -> usize {
        1 << self.n_wires()
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        match self {
            GateMatrix::One(m) => m[r][c],
            GateMatrix::Two(m) => m[r][c],
        }
    }

    fn as_one(&self) -> [[Complex64; 2]; 2] {
        match self {
            GateMatrix::One(m) => *m,
            GateMatrix::Two(_) => panic!("not a single-wire matrix"),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> GateMatrix {
        match self {
            GateMatrix::One(m) => {
                let mut out = [[ZERO; 2]; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        out[r][c] = m[c][r].conj();
                    }
                }
                GateMatrix::One(out)
            }
            GateMatrix::Two(m) => {
                let mut out = [[ZERO; 4]; 4];
                for r in 0..4 {
                    for c in 0..4 {
                        out[r][c] = m[c][r].conj();
                    }
                }
                GateMatrix::Two(out)
            }
        }
    }

    /// Matrix product `self * rhs` (so `rhs` acts first).
    pub fn mul(&self, rhs: &GateMatrix) -> Option<GateMatrix> {
        match (self, rhs) {
            (GateMatrix::One(a), GateMatrix::One(b)) => {
                let mut out = [[ZERO; 2]; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        out[r][c] = (0..2).map(|k| a[r][k] * b[k][c]).sum();
                    }
                }
                Some(GateMatrix::One(out))
            }
            (GateMatrix::Two(a), GateMatrix::Two(b)) => {
                let mut out = [[ZERO; 4]; 4];
                for r in 0..4 {
                    for c in 0..4 {
                        out[r][c] = (0..4).map(|k| a[r][k] * b[k][c]).sum();
                    }
                }
                Some(GateMatrix::Two(out))
            }
            _ => None,
        }
    }

    /// Largest entrywise deviation of `U^dagger U` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let prod = self.adjoint().mul(self).expect("same dimension");
        let d = self.dimension();
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in 0..d {
                let id = if r == c { ONE } else { ZERO };
                worst = worst.max((prod.entry(r, c) - id).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_error() <= UNITARY_TOL
    }
}

fn kron2(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 4]; 4] {
    let mut m = [[ZERO; 4]; 4];
    for ar in 0..2 {
        for ac in 0..2 {
            for br in 0..2 {
                for bc in 0..2 {
                    m[2 * ar + br][2 * ac + bc] = a[ar][ac] * b[br][bc];
                }
            }
        }
    }
    m
}

/// Outcome of a single computational-basis measurement of one wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// Eigenvalue +1, bit value 0.
    Plus,
    /// Eigenvalue -1, bit value 1.
    Minus,
}

impl Outcome {
    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n_qubits` wires.
    pub fn ground(n_qubits: usize) -> Result<Self, SimError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(SimError::QubitCount(n_qubits));
        }
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[0] = ONE;
        Ok(StateVector {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps an existing amplitude vector, checking length and normalization.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, SimError> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(SimError::BadLength(len));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(SimError::QubitCount(n_qubits));
        }
        let state = StateVector {
            n_qubits,
            amplitudes,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(SimError::NotNormalized(norm));
        }
        Ok(state)
    }

    /// Like [`from_amplitudes`](Self::from_amplitudes) but skips the norm
    /// check. Used for intermediate vectors of the adjoint sweep, which are
    /// not states.
    pub(crate) fn from_raw(n_qubits: usize, amplitudes: Vec<Complex64>) -> Self {
        debug_assert_eq!(amplitudes.len(), 1 << n_qubits);
        StateVector {
            n_qubits,
            amplitudes,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn has_nan(&self) -> bool {
        self.amplitudes
            .iter()
            .any(|a| a.re.is_nan() || a.im.is_nan())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn check_wire(&self, wire: usize) -> Result<(), SimError> {
        if wire >= self.n_qubits {
            Err(SimError::WireOutOfRange {
                wire,
                n_qubits: self.n_qubits,
            })
        } else {
            Ok(())
        }
    }

    /// Stride of `wire` in the basis index.
    fn stride(&self, wire: usize) -> usize {
        1 << (self.n_qubits - 1 - wire)
    }

    /// Applies `gate` to the listed wires in place.
    pub fn apply_gate(&mut self, gate: &GateMatrix, wires: &[usize]) -> Result<(), SimError> {
        if wires.len() != gate.n_wires() {
            return Err(SimError::WireCount {
                gate_wires: gate.n_wires(),
                given: wires.len(),
            });
        }
        for &w in wires {
            self.check_wire(w)?;
        }
        match gate {
            GateMatrix::One(m) => self.apply_one(m, wires[0]),
            GateMatrix::Two(m) => {
                if wires[0] == wires[1] {
                    return Err(SimError::DuplicateWire(wires[0]));
                }
                self.apply_two(m, wires[0], wires[1]);
            }
        }
        Ok(())
    }

    /// Unchecked single-wire kernel.
    pub(crate) fn apply_one(&mut self, m: &[[Complex64; 2]; 2], wire: usize) {
        let stride = self.stride(wire);
        let amps = &mut self.amplitudes;
        let dim = amps.len();
        let mut base = 0;
        while base < dim {
            for i in base..base + stride {
                let a0 = amps[i];
                let a1 = amps[i + stride];
                amps[i] = m[0][0] * a0 + m[0][1] * a1;
                amps[i + stride] = m[1][0] * a0 + m[1][1] * a1;
            }
            base += 2 * stride;
        }
    }

    /// Unchecked two-wire kernel; `hi` is the high bit of the 4x4 index.
    pub(crate) fn apply_two(&mut self, m: &[[Complex64; 4]; 4], hi: usize, lo: usize) {
        let sh = self.stride(hi);
        let sl = self.stride(lo);
        let mask = sh | sl;
        let amps = &mut self.amplitudes;
        for i in 0..amps.len() {
            if i & mask != 0 {
                continue;
            }
            let idx = [i, i | sl, i | sh, i | sh | sl];
            let v = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
            for (r, &out) in idx.iter().enumerate() {
                amps[out] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
            }
        }
    }

    /// Applies `block` to `target` on the subspace where `control` is 1.
    pub(crate) fn apply_controlled(
        &mut self,
        block: &[[Complex64; 2]; 2],
        control: usize,
        target: usize,
    ) {
        let sc = self.stride(control);
        let st = self.stride(target);
        let amps = &mut self.amplitudes;
        for i in 0..amps.len() {
            if i & sc == 0 || i & st != 0 {
                continue;
            }
            let a0 = amps[i];
            let a1 = amps[i | st];
            amps[i] = block[0][0] * a0 + block[0][1] * a1;
            amps[i | st] = block[1][0] * a0 + block[1][1] * a1;
        }
    }

    /// Applies a Pauli operator to one wire in place (used to form `O|psi>`).
    pub(crate) fn apply_pauli(&mut self, axis: PauliAxis, wire: usize) {
        self.apply_one(&axis.matrix(), wire);
    }

    /// Probability of reading bit 0 (outcome +1) on `wire`.
    pub fn prob_zero(&self, wire: usize) -> Result<f64, SimError> {
        self.check_wire(wire)?;
        let s = self.stride(wire);
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & s == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Exact `<sigma_axis>` on one wire, clamped into `[-1, 1]`.
    pub fn expectation(&self, axis: PauliAxis, wire: usize) -> Result<f64, SimError> {
        self.check_wire(wire)?;
        let s = self.stride(wire);
        let amps = &self.amplitudes;
        let raw = match axis {
            PauliAxis::Z => amps
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    if i & s == 0 {
                        a.norm_sqr()
                    } else {
                        -a.norm_sqr()
                    }
                })
                .sum::<f64>(),
            PauliAxis::X | PauliAxis::Y => {
                let mut acc = ZERO;
                for i in (0..amps.len()).filter(|i| i & s == 0) {
                    acc += amps[i].conj() * amps[i | s];
                }
                if axis == PauliAxis::X {
                    2.0 * acc.re
                } else {
                    2.0 * acc.im
                }
            }
        };
        Ok(raw.clamp(-1.0, 1.0))
    }

    /// Pauli-Z expectations of every wire, in wire order.
    pub fn z_expectations(&self) -> Vec<f64> {
        (0..self.n_qubits)
            .map(|w| self.expectation(PauliAxis::Z, w).expect("wire in range"))
            .collect()
    }

    /// Draws one computational-basis outcome for `wire` without collapsing
    /// the state. Consumes exactly one uniform variate from `rng`.
    pub fn sample_wire<R: Rng + ?Sized>(
        &self,
        wire: usize,
        rng: &mut R,
    ) -> Result<Outcome, SimError> {
        let p_plus = self.prob_zero(wire)?;
        let u: f64 = rng.gen();
        Ok(if u < p_plus {
            Outcome::Plus
        } else {
            Outcome::Minus
        })
    }
}
