//! Mini-batch Adam training of the QCNN, forward or reversed.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{
    build_qcnn, dense_angle_embedding_on, target_encoding, AnsatzConfig, Circuit, CircuitError,
    ConvKind, Direction, OUTPUT_WIRE,
};
use crate::data::{ClassPair, FeatureSet};
use crate::grad::{weighted_gradient, GradError, Observable};
use crate::seeds::{derive_seed, rng};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("feature set is empty")]
    NoData,
    #[error("batch size {batch} exceeds the {available} available samples")]
    BatchTooLarge { batch: usize, available: usize },
    #[error("loss became NaN at step {step}")]
    NaN { step: usize },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Grad(GradError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model file version {found}, expected {MODEL_VERSION}")]
    Version { found: u32 },
}

/// Adaptive-moment optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub direction: Direction,
    pub conv_kind: ConvKind,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(conv_kind: ConvKind, direction: Direction, seed: u64) -> Self {
        TrainConfig {
            direction,
            conv_kind,
            optimizer: AdamConfig::default(),
            batch_size: 25,
            n_steps: 200,
            seed,
        }
    }

    pub fn ansatz(&self) -> AnsatzConfig {
        AnsatzConfig::new(self.conv_kind, self.direction)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && o.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate must be positive, got {}",
                o.learning_rate
            )));
        }
        if !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return Err(TrainError::Config(
                "moment decay rates must lie in [0, 1)".into(),
            ));
        }
        if !(o.epsilon > 0.0) {
            return Err(TrainError::Config("epsilon must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            run: self.seed,
            init: derive_seed(self.seed, &["init"]),
            batch: derive_seed(self.seed, &["batch"]),
        }
    }
}

/// Every RNG seed a training run consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub run: u64,
    pub init: u64,
    pub batch: u64,
}

/// Squared error of the output-wire probability `p = (1 + E) / 2` against
/// the label's target (1 for label 0, 0 for label 1). Returns the loss and
/// its derivative with respect to `E`.
pub fn forward_loss(expectation_z0: f64, label: u8) -> (f64, f64) {
    let p = (1.0 + expectation_z0) / 2.0;
    let t = if label == 0 { 1.0 } else { 0.0 };
    ((p - t).powi(2), p - t)
}

/// Mean squared distance of every `<Z_i>` from 1, with its gradient.
pub fn reversed_loss(expectations_z: &[f64]) -> (f64, Vec<f64>) {
    let n = expectations_z.len() as f64;
    let loss = expectations_z
        .iter()
        .map(|e| (e - 1.0).powi(2))
        .sum::<f64>()
        / n;
    let grad = expectations_z.iter().map(|e| 2.0 * (e - 1.0) / n).collect();
    (loss, grad)
}

/// Uniform on `[0, 2 pi)`.
pub fn init_params<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect()
}

/// The QCNN and its adjoint for one ansatz, ready to be wrapped around
/// per-input embeddings and target encodings.
#[derive(Debug, Clone)]
pub struct ModelCircuits {
    pub ansatz: AnsatzConfig,
    qcnn: Circuit,
    qcnn_adjoint: Circuit,
}

impl ModelCircuits {
    pub fn new(ansatz: AnsatzConfig) -> Result<Self, CircuitError> {
        let qcnn = build_qcnn(&ansatz)?;
        let qcnn_adjoint = qcnn.adjoint();
        Ok(ModelCircuits {
            ansatz,
            qcnn,
            qcnn_adjoint,
        })
    }

    pub fn param_count(&self) -> usize {
        self.qcnn.param_count()
    }

    pub fn qcnn(&self) -> &Circuit {
        &self.qcnn
    }

    /// Embedding then QCNN.
    pub fn forward(&self, features: &[f64]) -> Result<Circuit, CircuitError> {
        dense_angle_embedding_on(self.ansatz.n_qubits, features)?.then(&self.qcnn)
    }

    /// Target encoding, adjoint QCNN, adjoint embedding.
    pub fn reversed(&self, features: &[f64], label: u8) -> Result<Circuit, CircuitError> {
        let embed = dense_angle_embedding_on(self.ansatz.n_qubits, features)?;
        target_encoding(self.ansatz.n_qubits, label)?
            .then(&self.qcnn_adjoint)?
            .then(&embed.adjoint())
    }

    /// Target encoding then adjoint QCNN, with no embedding.
    pub fn reversed_unembedded(&self, label: u8) -> Result<Circuit, CircuitError> {
        target_encoding(self.ansatz.n_qubits, label)?.then(&self.qcnn_adjoint)
    }

    /// Loss and parameter gradient for one labelled input in `direction`.
    pub fn sample_loss_and_grad(
        &self,
        direction: Direction,
        params: &[f64],
        features: &[f64],
        label: u8,
    ) -> Result<(f64, Vec<f64>), TrainError> {
        match direction {
            Direction::Forward => {
                let circuit = self.forward(features)?;
                let obs = [Observable::z(OUTPUT_WIRE)];
                // the weight is irrelevant to the values; scale afterwards
                let (values, grad) =
                    weighted_gradient(&circuit, params, &obs, &[1.0]).map_err(TrainError::Grad)?;
                let (loss, dl) = forward_loss(values[0], label);
                Ok((loss, grad.into_iter().map(|g| g * dl).collect()))
            }
            Direction::Reversed => {
                let circuit = self.reversed(features, label)?;
                let obs = Observable::all_z(self.ansatz.n_qubits);
                // values do not depend on weights, so read them first
                let values = circuit.run(params)?.z_expectations();
                let (loss, weights) = reversed_loss(&values);
                let (_, grad) = weighted_gradient(&circuit, params, &obs, &weights)
                    .map_err(TrainError::Grad)?;
                Ok((loss, grad))
            }
        }
    }

    /// Mean loss and gradient over `indices` of `data`. Samples are evaluated
    /// in parallel and reduced in index order.
    pub fn batch_loss_and_grad(
        &self,
        direction: Direction,
        params: &[f64],
        data: &FeatureSet,
        indices: &[usize],
    ) -> Result<(f64, Vec<f64>), TrainError> {
        let parts: Vec<(f64, Vec<f64>)> = indices
            .par_iter()
            .map(|&i| {
                self.sample_loss_and_grad(direction, params, &data.features[i], data.labels[i])
            })
            .collect::<Result<_, _>>()?;
        let scale = 1.0 / indices.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; params.len()];
        for (l, g) in parts {
            loss += l;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((loss * scale, grad))
    }
}

struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(cfg: AdamConfig, n: usize) -> Self {
        Adam {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= learning_rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub config: TrainConfig,
    pub pair: ClassPair,
    pub params: Vec<f64>,
    pub loss_history: Vec<f64>,
    pub seeds: Seeds,
}

impl TrainedModel {
    pub fn circuits(&self) -> Result<ModelCircuits, CircuitError> {
        ModelCircuits::new(self.config.ansatz())
    }

    pub fn to_json(&self) -> Result<String, TrainError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, TrainError> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(s)?;
        if header.version != MODEL_VERSION {
            return Err(TrainError::Version {
                found: header.version,
            });
        }
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Trains from a uniform random initialization for `config.n_steps` Adam
/// steps, each on a batch drawn without replacement.
pub fn train(config: &TrainConfig, data: &FeatureSet) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    if data.is_empty() {
        return Err(TrainError::NoData);
    }
    if config.batch_size > data.len() {
        return Err(TrainError::BatchTooLarge {
            batch: config.batch_size,
            available: data.len(),
        });
    }
    let circuits = ModelCircuits::new(config.ansatz())?;
    let seeds = config.seeds();
    let mut params = init_params(circuits.param_count(), &mut rng(seeds.init));
    let mut batch_rng = rng(seeds.batch);
    let mut adam = Adam::new(config.optimizer, params.len());
    let mut loss_history = Vec::with_capacity(config.n_steps);

    for step in 0..config.n_steps {
        let mut batch =
            rand::seq::index::sample(&mut batch_rng, data.len(), config.batch_size).into_vec();
        batch.sort_unstable();
        let (loss, grad) =
            match circuits.batch_loss_and_grad(config.direction, &params, data, &batch) {
                Err(TrainError::Grad(GradError::NaN)) => return Err(TrainError::NaN { step }),
                other => other?,
            };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NaN { step });
        }
        loss_history.push(loss);
        adam.step(&mut params, &grad);
    }

    Ok(TrainedModel {
        version: MODEL_VERSION,
        config: config.clone(),
        pair: data.pair,
        params,
        loss_history,
        seeds,
    })
}
