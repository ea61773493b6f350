//! Expectation values and their parameter Jacobians.
//!
//! Three engines produce the same numbers:
//!
//! * [`GradMode::Adjoint`]: one forward pass, then a backward sweep per
//!   observable that rolls the state and the observable-weighted bra back one
//!   gate at a time. Cost is linear in the number of gates.
//! * [`GradMode::ParamShift`]: for every gate occurrence, evaluate the circuit
//!   with that gate's angle shifted. Single-wire and two-wire Pauli rotations
//!   use the two-term rule at `+-pi/2`; controlled rotations have generator
//!   spectrum `{0, +-1/2}` and need the four-term rule with extra shifts at
//!   `+-3pi/2`.
//! * [`GradMode::FiniteDiff`]: central differences with `h = 1e-5`, for tests.
//!
//! Slots shared by several gates accumulate the per-gate derivatives, and a
//! negated slot reference contributes with flipped sign.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{Circuit, CircuitError};
use crate::sim::{PauliAxis, StateVector};

/// Central-difference step of [`GradMode::FiniteDiff`].
pub const FINITE_DIFF_STEP: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("no observables requested")]
    NoObservables,
    #[error("observable wire {wire} out of range for {n_qubits} qubits")]
    ObservableWire { wire: usize, n_qubits: usize },
    #[error("{got} weights for {expected} observables")]
    WeightCount { expected: usize, got: usize },
    #[error("NaN amplitude after the forward pass")]
    NaN,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GradMode {
    Adjoint,
    ParamShift,
    FiniteDiff,
}

/// A single-wire Pauli observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observable {
    pub axis: PauliAxis,
    pub wire: usize,
}

impl Observable {
    pub fn z(wire: usize) -> Self {
        Observable {
            axis: PauliAxis::Z,
            wire,
        }
    }

    /// Pauli-Z on each of the first `n` wires.
    pub fn all_z(n: usize) -> Vec<Self> {
        (0..n).map(Observable::z).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GradientRequest<'a> {
    pub circuit: &'a Circuit,
    pub params: &'a [f64],
    pub observables: &'a [Observable],
    pub mode: GradMode,
}

/// Expectations and `jacobian[j][k] = d<O_j>/d theta_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub values: Vec<f64>,
    pub jacobian: Vec<Vec<f64>>,
}

fn validate(
    circuit: &Circuit,
    params: &[f64],
    observables: &[Observable],
) -> Result<(), GradError> {
    circuit.check_params(params)?;
    if observables.is_empty() {
        return Err(GradError::NoObservables);
    }
    for o in observables {
        if o.wire >= circuit.n_qubits() {
            return Err(GradError::ObservableWire {
                wire: o.wire,
                n_qubits: circuit.n_qubits(),
            });
        }
    }
    Ok(())
}

fn forward(circuit: &Circuit, params: &[f64]) -> Result<StateVector, GradError> {
    let state = circuit.run(params)?;
    if state.has_nan() {
        return Err(GradError::NaN);
    }
    Ok(state)
}

fn expectations(state: &StateVector, observables: &[Observable]) -> Vec<f64> {
    observables
        .iter()
        .map(|o| state.expectation(o.axis, o.wire).expect("validated wire"))
        .collect()
}

pub fn expectations_and_grads(req: &GradientRequest<'_>) -> Result<Jacobian, GradError> {
    validate(req.circuit, req.params, req.observables)?;
    match req.mode {
        GradMode::Adjoint => adjoint_jacobian(req.circuit, req.params, req.observables),
        GradMode::ParamShift => shift_jacobian(req.circuit, req.params, req.observables),
        GradMode::FiniteDiff => finite_diff_jacobian(req.circuit, req.params, req.observables),
    }
}

/// Expectations of `observables` and the gradient of `sum_j w_j <O_j>`, in a
/// single adjoint sweep.
pub fn weighted_gradient(
    circuit: &Circuit,
    params: &[f64],
    observables: &[Observable],
    weights: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), GradError> {
    validate(circuit, params, observables)?;
    if weights.len() != observables.len() {
        return Err(GradError::WeightCount {
            expected: observables.len(),
            got: weights.len(),
        });
    }
    let state = forward(circuit, params)?;
    let values = expectations(&state, observables);
    let grad = adjoint_sweep(circuit, params, state, observables, weights);
    Ok((values, grad))
}

fn adjoint_jacobian(
    circuit: &Circuit,
    params: &[f64],
    observables: &[Observable],
) -> Result<Jacobian, GradError> {
    let state = forward(circuit, params)?;
    let values = expectations(&state, observables);
    let jacobian = observables
        .iter()
        .map(|o| {
            adjoint_sweep(
                circuit,
                params,
                state.clone(),
                std::slice::from_ref(o),
                &[1.0],
            )
        })
        .collect();
    Ok(Jacobian { values, jacobian })
}

/// Backward sweep for `A = sum_j w_j O_j`. `ket` is the final state.
///
/// With `ket_k` the state after gate k and `bra_k = G_{k+1}^dag ... G_M^dag A ket_M`,
/// `d<A>/da_k = 2 Re <bra_k | dG_k/da ket_{k-1}>`.
fn adjoint_sweep(
    circuit: &Circuit,
    params: &[f64],
    mut ket: StateVector,
    observables: &[Observable],
    weights: &[f64],
) -> Vec<f64> {
    let n = ket.n_qubits();
    let mut bra = StateVector::from_raw(n, vec![Default::default(); 1 << n]);
    for (o, &w) in observables.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let mut term = ket.clone();
        term.apply_pauli(o.axis, o.wire);
        for (b, t) in bra.amplitudes_mut().iter_mut().zip(term.amplitudes()) {
            *b += t * w;
        }
    }

    let mut grad = vec![0.0; circuit.param_count()];
    let mut scratch = ket.clone();
    for op in circuit.ops().iter().rev() {
        op.apply_inverse(&mut ket, params);
        if let Some((slot, negated)) = op.slot() {
            scratch.amplitudes_mut().copy_from_slice(ket.amplitudes());
            op.apply_derivative(&mut scratch, params);
            let g = 2.0 * bra.inner(&scratch).re;
            grad[slot] += if negated { -g } else { g };
        }
        op.apply_inverse(&mut bra, params);
    }
    grad
}

fn shift_jacobian(
    circuit: &Circuit,
    params: &[f64],
    observables: &[Observable],
) -> Result<Jacobian, GradError> {
    let state = forward(circuit, params)?;
    let values = expectations(&state, observables);
    let mut jacobian = vec![vec![0.0; circuit.param_count()]; observables.len()];
    let eval = |i: usize, delta: f64| -> Result<Vec<f64>, GradError> {
        Ok(expectations(
            &circuit.run_shifted(params, i, delta)?,
            observables,
        ))
    };
    // four-term coefficients for generators with spectrum {0, +-1/2}
    let c_near = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
    let c_far = (SQRT_2 - 1.0) / (4.0 * SQRT_2);
    for (i, op) in circuit.ops().iter().enumerate() {
        let Some((slot, negated)) = op.slot() else {
            continue;
        };
        let plus = eval(i, FRAC_PI_2)?;
        let minus = eval(i, -FRAC_PI_2)?;
        let mut d: Vec<f64> = if op.kind.is_controlled() {
            let far_plus = eval(i, 3.0 * FRAC_PI_2)?;
            let far_minus = eval(i, -3.0 * FRAC_PI_2)?;
            (0..observables.len())
                .map(|j| c_near * (plus[j] - minus[j]) - c_far * (far_plus[j] - far_minus[j]))
                .collect()
        } else {
            plus.iter()
                .zip(&minus)
                .map(|(p, m)| (p - m) / 2.0)
                .collect()
        };
        if negated {
            d.iter_mut().for_each(|x| *x = -*x);
        }
        for (row, dj) in jacobian.iter_mut().zip(d) {
            row[slot] += dj;
        }
    }
    Ok(Jacobian { values, jacobian })
}

fn finite_diff_jacobian(
    circuit: &Circuit,
    params: &[f64],
    observables: &[Observable],
) -> Result<Jacobian, GradError> {
    let state = forward(circuit, params)?;
    let values = expectations(&state, observables);
    let mut jacobian = vec![vec![0.0; circuit.param_count()]; observables.len()];
    let mut p = params.to_vec();
    for k in 0..params.len() {
        p[k] = params[k] + FINITE_DIFF_STEP;
        let plus = expectations(&circuit.run(&p)?, observables);
        p[k] = params[k] - FINITE_DIFF_STEP;
        let minus = expectations(&circuit.run(&p)?, observables);
        p[k] = params[k];
        for (row, (a, b)) in jacobian.iter_mut().zip(plus.iter().zip(&minus)) {
            row[k] = (a - b) / (2.0 * FINITE_DIFF_STEP);
        }
    }
    Ok(Jacobian { values, jacobian })
}
