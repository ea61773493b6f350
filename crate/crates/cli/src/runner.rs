//! One training run: spec, seeds, artifacts and resumption.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use revqc::circuits::{ConvKind, Direction};
use revqc::data::{ClassPair, PairData};
use revqc::eval::{self, EvalReport, ReceptiveField};
use revqc::seeds::derive_seed;
use revqc::train::{self, AdamConfig, TrainConfig, TrainedModel};

use crate::config::{Dataset, Hyper};
use crate::store::{content_id, write_atomic};
use crate::CliError;

pub const RUN_FORMAT: u32 = 1;
const COMPLETE: &str = "COMPLETE";

/// Everything that determines a run's output. Its hash names the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub format: u32,
    pub dataset: Dataset,
    pub pair: ClassPair,
    pub conv: ConvKind,
    pub direction: Direction,
    pub repeat: usize,
    pub master_seed: u64,
    pub hyper: Hyper,
    pub data_fingerprint: String,
}

impl RunSpec {
    pub fn id(&self) -> String {
        content_id(self)
    }

    /// Shared by both directions so forward and reversed start from the
    /// same initialization and batch order.
    pub fn run_seed(&self) -> u64 {
        derive_seed(
            self.master_seed,
            &[
                "run",
                self.dataset.name(),
                self.conv.name(),
                &self.pair.to_string(),
                &self.repeat.to_string(),
            ],
        )
    }

    pub fn sample_seed(&self) -> u64 {
        derive_seed(self.run_seed(), &["sample", self.direction.name()])
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut c = TrainConfig::new(self.conv, self.direction, self.run_seed());
        c.optimizer = AdamConfig {
            learning_rate: self.hyper.learning_rate,
            beta1: self.hyper.beta1,
            beta2: self.hyper.beta2,
            ..AdamConfig::default()
        };
        c.batch_size = self.hyper.batch;
        c.n_steps = self.hyper.steps;
        c
    }

    pub fn dir(&self, out_dir: &Path) -> PathBuf {
        out_dir.join("runs").join(self.id())
    }
}

/// Headline numbers of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub dataset: Dataset,
    pub pair: ClassPair,
    pub conv: ConvKind,
    pub direction: Direction,
    pub repeat: usize,
    pub sampling_accuracy: f64,
    pub expectation_accuracy: f64,
    pub analytic_sampling_accuracy: f64,
    pub final_loss: f64,
    pub train_size: usize,
    pub test_size: usize,
    /// Mean reversal distance for the true and the other label (reversed
    /// runs only).
    pub distance_true: Option<f64>,
    pub distance_false: Option<f64>,
}

pub struct RunOutcome {
    pub summary: RunSummary,
    pub dir: PathBuf,
    pub reused: bool,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Run(format!("{}: {e}", path.display()))
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

pub fn is_complete(dir: &Path) -> bool {
    dir.join(COMPLETE).is_file()
}

pub fn read_summary(dir: &Path) -> Result<RunSummary, CliError> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(run_err)
}

pub fn read_model(dir: &Path) -> Result<TrainedModel, CliError> {
    let path = dir.join("model.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    TrainedModel::from_json(&text).map_err(run_err)
}

pub fn read_spec(dir: &Path) -> Result<RunSpec, CliError> {
    let path = dir.join("spec.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(run_err)
}

fn put(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    write_atomic(&path, bytes).map_err(io_err(&path))
}

fn csv_bytes(
    f: impl FnOnce(&mut Vec<u8>) -> Result<(), eval::EvalError>,
) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(run_err)?;
    Ok(buf)
}

/// Trains and evaluates `spec`, or reads back a completed run with the same
/// spec unless `force` is set.
pub fn execute(
    spec: &RunSpec,
    data: &PairData,
    out_dir: &Path,
    force: bool,
) -> Result<RunOutcome, CliError> {
    let dir = spec.dir(out_dir);
    if !force && is_complete(&dir) {
        return Ok(RunOutcome {
            summary: read_summary(&dir)?,
            dir,
            reused: true,
        });
    }
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    put(
        &dir,
        "spec.json",
        serde_json::to_string_pretty(spec)
            .map_err(run_err)?
            .as_bytes(),
    )?;

    let model = train::train(&spec.train_config(), &data.train).map_err(run_err)?;
    put(
        &dir,
        "model.json",
        model.to_json().map_err(run_err)?.as_bytes(),
    )?;

    let report = eval::evaluate(&model, &data.test, spec.sample_seed()).map_err(run_err)?;
    put(
        &dir,
        "report.json",
        report.to_json().map_err(run_err)?.as_bytes(),
    )?;
    put(&dir, "report.csv", &csv_bytes(|b| report.write_csv(b))?)?;
    let hist = eval::expectation_histogram(&model, &data.test).map_err(run_err)?;
    put(&dir, "histogram.csv", &csv_bytes(|b| hist.write_csv(b))?)?;

    let (distance_true, distance_false) = match spec.direction {
        Direction::Reversed => {
            let rf = eval::receptive_field(&model, &data.test).map_err(run_err)?;
            put(
                &dir,
                "receptive_field.json",
                rf.to_json().map_err(run_err)?.as_bytes(),
            )?;
            let (t, f) = rf.mean_true_false();
            (Some(t), Some(f))
        }
        Direction::Forward => (None, None),
    };

    let summary = summarize(spec, &model, &report, data, distance_true, distance_false);
    put(
        &dir,
        "summary.json",
        serde_json::to_string_pretty(&summary)
            .map_err(run_err)?
            .as_bytes(),
    )?;
    put(&dir, COMPLETE, b"")?;
    Ok(RunOutcome {
        summary,
        dir,
        reused: false,
    })
}

fn summarize(
    spec: &RunSpec,
    model: &TrainedModel,
    report: &EvalReport,
    data: &PairData,
    distance_true: Option<f64>,
    distance_false: Option<f64>,
) -> RunSummary {
    RunSummary {
        id: spec.id(),
        dataset: spec.dataset,
        pair: spec.pair,
        conv: spec.conv,
        direction: spec.direction,
        repeat: spec.repeat,
        sampling_accuracy: report.sampling_accuracy,
        expectation_accuracy: report.expectation_accuracy,
        analytic_sampling_accuracy: report.analytic_sampling_accuracy,
        final_loss: model.loss_history.last().copied().unwrap_or(f64::NAN),
        train_size: data.train.len(),
        test_size: data.test.len(),
        distance_true,
        distance_false,
    }
}

/// Receptive field of a completed run, read from disk or recomputed for
/// forward runs.
pub fn receptive_field(dir: &Path, data: &PairData) -> Result<ReceptiveField, CliError> {
    let cached = dir.join("receptive_field.json");
    if let Ok(text) = fs::read_to_string(&cached) {
        if let Ok(rf) = serde_json::from_str(&text) {
            return Ok(rf);
        }
    }
    let model = read_model(dir)?;
    eval::receptive_field(&model, &data.test).map_err(run_err)
}
