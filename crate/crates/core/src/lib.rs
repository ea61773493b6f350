//! Quantum convolutional classifiers on an exact statevector simulator,
//! trained either forward (embedding then QCNN, MSE on the output-wire
//! probability) or in reverse (target encoding, adjoint QCNN, adjoint
//! embedding, MSE of every wire against the ground state), and scored by
//! single-shot and expectation-value accuracy.

pub mod circuits;
pub mod data;
pub mod eval;
pub mod grad;
pub mod seeds;
pub mod sim;
pub mod train;

pub use circuits::{AnsatzConfig, Circuit, ConvKind, Direction};
pub use sim::{GateMatrix, Outcome, PauliAxis, StateVector};
