//! Accuracy metrics, output distributions and receptive-field analysis.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{CircuitError, OUTPUT_WIRE};
use crate::data::{ClassPair, FeatureSet};
use crate::seeds::rng;
use crate::sim::{Outcome, PauliAxis, SimError};
use crate::train::{ModelCircuits, TrainedModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("model was trained on pair {model} but features are for {features}")]
    PairMismatch {
        model: ClassPair,
        features: ClassPair,
    },
    #[error("aggregation needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("shots per input must be positive")]
    NoShots,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Class read from an expectation: 0 when strictly positive, otherwise 1.
pub fn predict(expectation_z0: f64) -> u8 {
    if expectation_z0 > 0.0 {
        0
    } else {
        1
    }
}

/// Class read from one measured outcome.
pub fn predict_outcome(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::Plus => 0,
        Outcome::Minus => 1,
    }
}

fn check_pair(model: &TrainedModel, features: &FeatureSet) -> Result<(), EvalError> {
    if model.pair != features.pair {
        return Err(EvalError::PairMismatch {
            model: model.pair,
            features: features.pair,
        });
    }
    Ok(())
}

/// `<Z_0>` of the forward circuit for every input, in input order.
pub fn output_expectations(
    circuits: &ModelCircuits,
    params: &[f64],
    features: &FeatureSet,
) -> Result<Vec<f64>, EvalError> {
    features
        .features
        .par_iter()
        .map(|f| {
            let state = circuits.forward(f)?.run(params)?;
            Ok(state.expectation(PauliAxis::Z, OUTPUT_WIRE)?)
        })
        .collect()
}

fn model_expectations(model: &TrainedModel, features: &FeatureSet) -> Result<Vec<f64>, EvalError> {
    check_pair(model, features)?;
    output_expectations(&model.circuits()?, &model.params, features)
}

fn sign(label: u8) -> f64 {
    if label == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Fraction of inputs whose thresholded expectation matches the label.
pub fn accuracy_from_expectations(expectations: &[f64], labels: &[u8]) -> f64 {
    let hits = expectations
        .iter()
        .zip(labels)
        .filter(|(e, l)| predict(**e) == **l)
        .count();
    hits as f64 / labels.len() as f64
}

/// Expected single-shot accuracy: the mean of `(1 + s <Z_0>) / 2` with
/// `s = +1` for label 0 and `-1` for label 1.
pub fn analytic_sampling_accuracy(expectations: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = expectations
        .iter()
        .zip(labels)
        .map(|(e, l)| (1.0 + sign(*l) * e) / 2.0)
        .sum();
    total / labels.len() as f64
}

/// Draws `shots` outcomes from a wire with expectation `e`, returning the
/// number that read as `label`. One uniform variate per shot.
fn correct_shots<R: Rng + ?Sized>(e: f64, label: u8, shots: usize, rng: &mut R) -> usize {
    let p_plus = (1.0 + e) / 2.0;
    (0..shots)
        .filter(|_| {
            let outcome = if rng.gen::<f64>() < p_plus {
                Outcome::Plus
            } else {
                Outcome::Minus
            };
            predict_outcome(outcome) == label
        })
        .count()
}

pub fn expectation_accuracy(model: &TrainedModel, features: &FeatureSet) -> Result<f64, EvalError> {
    let e = model_expectations(model, features)?;
    Ok(accuracy_from_expectations(&e, &features.labels))
}

/// Single-shot accuracy. With `shots_per_input > 1` this returns the mean
/// per-input fraction of correct shots, an estimate of the expected
/// single-shot accuracy.
pub fn sampling_accuracy<R: Rng + ?Sized>(
    model: &TrainedModel,
    features: &FeatureSet,
    rng: &mut R,
    shots_per_input: usize,
) -> Result<f64, EvalError> {
    if shots_per_input == 0 {
        return Err(EvalError::NoShots);
    }
    let e = model_expectations(model, features)?;
    let hits: usize = e
        .iter()
        .zip(&features.labels)
        .map(|(e, l)| correct_shots(*e, *l, shots_per_input, rng))
        .sum();
    Ok(hits as f64 / (features.len() * shots_per_input) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub label: u8,
    pub expectation: f64,
    /// Measured value of the output wire, `+1` or `-1`.
    pub outcome: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pair: ClassPair,
    pub sampling_accuracy: f64,
    pub expectation_accuracy: f64,
    /// Expected value of `sampling_accuracy` over measurement randomness.
    pub analytic_sampling_accuracy: f64,
    pub sampling_seed: u64,
    pub per_input: Vec<InputRecord>,
}

/// Both accuracies on `features`, with one measurement per input drawn from
/// an RNG seeded by `sampling_seed`.
pub fn evaluate(
    model: &TrainedModel,
    features: &FeatureSet,
    sampling_seed: u64,
) -> Result<EvalReport, EvalError> {
    let e = model_expectations(model, features)?;
    let mut r = rng(sampling_seed);
    let per_input: Vec<InputRecord> = e
        .iter()
        .zip(&features.labels)
        .map(|(&expectation, &label)| {
            let outcome = if r.gen::<f64>() < (1.0 + expectation) / 2.0 {
                Outcome::Plus
            } else {
                Outcome::Minus
            };
            InputRecord {
                label,
                expectation,
                outcome: outcome.value(),
            }
        })
        .collect();
    let n = per_input.len() as f64;
    let sampled_hits = per_input
        .iter()
        .filter(|r| (r.outcome < 0) as u8 == r.label)
        .count();
    Ok(EvalReport {
        pair: features.pair,
        sampling_accuracy: sampled_hits as f64 / n,
        expectation_accuracy: accuracy_from_expectations(&e, &features.labels),
        analytic_sampling_accuracy: analytic_sampling_accuracy(&e, &features.labels),
        sampling_seed,
        per_input,
    })
}

impl EvalReport {
    /// Writes `label,expectation,outcome` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.per_input {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Raw `<Z_0>` values tagged by true label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub values: Vec<(f64, u8)>,
}

impl Histogram {
    pub fn class_values(&self, label: u8) -> Vec<f64> {
        self.values
            .iter()
            .filter(|(_, l)| *l == label)
            .map(|(v, _)| *v)
            .collect()
    }

    /// Mean over inputs of one class; `None` if the class is absent.
    pub fn class_mean(&self, label: u8) -> Option<f64> {
        let v = self.class_values(label);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Writes `value,label` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["value", "label"])?;
        for (v, l) in &self.values {
            w.write_record([v.to_string(), l.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn expectation_histogram(
    model: &TrainedModel,
    features: &FeatureSet,
) -> Result<Histogram, EvalError> {
    let e = model_expectations(model, features)?;
    Ok(Histogram {
        values: e.into_iter().zip(features.labels.iter().copied()).collect(),
    })
}

/// Maps an X or Y expectation onto the embedding's angle range.
pub fn expectation_to_angle(v: f64) -> f64 {
    PI * (1.0 - v.clamp(-1.0, 1.0)) / 2.0
}

/// The input-space points each label reverses to: the reversed circuit
/// without embedding, read as `<X_i>` then `<Y_i>` and mapped to `[0, pi]`.
pub fn center_points(model: &TrainedModel) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let circuits = model.circuits()?;
    let center = |label: u8| -> Result<Vec<f64>, EvalError> {
        let state = circuits.reversed_unembedded(label)?.run(&model.params)?;
        let n = state.n_qubits();
        let mut out = Vec::with_capacity(2 * n);
        for axis in [PauliAxis::X, PauliAxis::Y] {
            for w in 0..n {
                out.push(expectation_to_angle(state.expectation(axis, w)?));
            }
        }
        Ok(out)
    };
    Ok((center(0)?, center(1)?))
}

/// Magnitude of the per-wire angles `arccos <Z_i>` away from the ground state.
pub fn distance_from_expectations(z: &[f64]) -> f64 {
    z.iter()
        .map(|e| e.clamp(-1.0, 1.0).acos().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// For every input, the distance from the ground state after reversing with
/// label 0 and with label 1.
pub fn reversal_distances(
    model: &TrainedModel,
    features: &FeatureSet,
) -> Result<Vec<(f64, f64)>, EvalError> {
    check_pair(model, features)?;
    let circuits = model.circuits()?;
    features
        .features
        .par_iter()
        .map(|f| {
            let d = |label: u8| -> Result<f64, EvalError> {
                let state = circuits.reversed(f, label)?.run(&model.params)?;
                Ok(distance_from_expectations(&state.z_expectations()))
            };
            Ok((d(0)?, d(1)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceptiveField {
    pub center_0: Vec<f64>,
    pub center_1: Vec<f64>,
    pub labels: Vec<u8>,
    pub distances: Vec<(f64, f64)>,
}

impl ReceptiveField {
    /// Mean distance to the true label's reversal and to the other label's.
    pub fn mean_true_false(&self) -> (f64, f64) {
        let n = self.labels.len() as f64;
        let (mut t, mut f) = (0.0, 0.0);
        for (l, (d0, d1)) in self.labels.iter().zip(&self.distances) {
            let (dt, df) = if *l == 0 { (d0, d1) } else { (d1, d0) };
            t += dt;
            f += df;
        }
        (t / n, f / n)
    }

    /// Header `c0..c15`, then the label-0 center and the label-1 center.
    pub fn write_centers_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record((0..self.center_0.len()).map(|i| format!("c{i}")))?;
        for c in [&self.center_0, &self.center_1] {
            w.write_record(c.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Rows of `label,d0,d1`.
    pub fn write_distances_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["label", "d0", "d1"])?;
        for (l, (d0, d1)) in self.labels.iter().zip(&self.distances) {
            w.write_record([l.to_string(), d0.to_string(), d1.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn receptive_field(
    model: &TrainedModel,
    features: &FeatureSet,
) -> Result<ReceptiveField, EvalError> {
    let (center_0, center_1) = center_points(model)?;
    Ok(ReceptiveField {
        center_0,
        center_1,
        labels: features.labels.clone(),
        distances: reversal_distances(model, features)?,
    })
}

/// Sample mean and standard deviation (n - 1 denominator) of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl fmt::Display for CellStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}% ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

pub fn aggregate(values: &[f64]) -> Result<CellStats, EvalError> {
    let n = values.len();
    if n < 2 {
        return Err(EvalError::TooFewValues(n));
    }
    // shifting by the first value keeps identical inputs exact
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(CellStats {
        mean,
        std: var.sqrt(),
        n,
    })
}
