//! Full grid of runs with per-pair and per-cell tables.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use revqc::circuits::{ConvKind, Direction};
use revqc::data::{sample_class_pairs, ClassPair, PairData};
use revqc::eval::{aggregate, CellStats};
use revqc::seeds::{derive_seed, rng};

use crate::config::{Dataset, Settings};
use crate::runner::{self, RunSpec, RunSummary, RUN_FORMAT};
use crate::store::{self, write_atomic};
use crate::CliError;

/// Class pairs for one unitary, or for the whole dataset when shared.
pub fn draw_pairs(
    settings: &Settings,
    ds: Dataset,
    conv: ConvKind,
) -> Result<Vec<ClassPair>, CliError> {
    let seed = if settings.shared_pairs {
        derive_seed(settings.seed, &["pairs", ds.name()])
    } else {
        derive_seed(settings.seed, &["pairs", ds.name(), conv.name()])
    };
    sample_class_pairs(&mut rng(seed), settings.n_pairs).map_err(|e| CliError::Usage(e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub dataset: Dataset,
    pub pair: ClassPair,
    pub conv: ConvKind,
    pub direction: Direction,
    pub repeat: usize,
    pub error: String,
}

pub struct SweepResult {
    pub runs: Vec<RunSummary>,
    pub failures: Vec<Failure>,
    pub reused: usize,
    pub table_dir: PathBuf,
}

/// Runs every (dataset, unitary, direction, pair, repeat) combination not
/// already complete, then writes the tables.
pub fn sweep(settings: &Settings, force: bool) -> Result<SweepResult, CliError> {
    let mut specs = Vec::new();
    let mut features: BTreeMap<(Dataset, ClassPair), PairData> = BTreeMap::new();
    for &ds in &settings.datasets {
        let loaded = store::load_dataset(settings.source(ds))?;
        for &conv in &settings.conv {
            for pair in draw_pairs(settings, ds, conv)? {
                if let Entry::Vacant(slot) = features.entry((ds, pair)) {
                    slot.insert(store::pair_features(settings, ds, &loaded, pair)?.0);
                }
                for &direction in &settings.directions {
                    for repeat in 0..settings.repeats {
                        specs.push(RunSpec {
                            format: RUN_FORMAT,
                            dataset: ds,
                            pair,
                            conv,
                            direction,
                            repeat,
                            master_seed: settings.seed,
                            hyper: settings.hyper,
                            data_fingerprint: loaded.fingerprint.clone(),
                        });
                    }
                }
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| CliError::Run(e.to_string()))?;
    let outcomes: Vec<_> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                let data = &features[&(spec.dataset, spec.pair)];
                runner::execute(spec, data, &settings.out_dir, force)
            })
            .collect()
    });

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut reused = 0;
    for (spec, outcome) in specs.iter().zip(outcomes) {
        match outcome {
            Ok(o) => {
                reused += o.reused as usize;
                runs.push(o.summary);
            }
            Err(e) => failures.push(Failure {
                dataset: spec.dataset,
                pair: spec.pair,
                conv: spec.conv,
                direction: spec.direction,
                repeat: spec.repeat,
                error: e.to_string(),
            }),
        }
    }
    let table_dir = settings.out_dir.join("sweep");
    write_tables(&table_dir, &runs, &failures)?;
    Ok(SweepResult {
        runs,
        failures,
        reused,
        table_dir,
    })
}

#[derive(Debug, Clone, Serialize)]
struct RunRow<'a> {
    id: &'a str,
    dataset: Dataset,
    conv: &'static str,
    direction: &'static str,
    pair: String,
    repeat: usize,
    sampling_accuracy: f64,
    expectation_accuracy: f64,
    analytic_sampling_accuracy: f64,
    final_loss: f64,
    train_size: usize,
    test_size: usize,
    distance_true: Option<f64>,
    distance_false: Option<f64>,
}

/// One aggregated group of runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub dataset: Dataset,
    pub conv: &'static str,
    pub direction: &'static str,
    /// Empty for whole cells.
    pub pair: String,
    pub n: usize,
    pub sampling_mean: f64,
    pub sampling_std: Option<f64>,
    pub sampling: String,
    pub expectation_mean: f64,
    pub expectation_std: Option<f64>,
    pub expectation: String,
}

fn stats(values: &[f64]) -> (f64, Option<f64>, String) {
    match aggregate(values) {
        Ok(s @ CellStats { mean, std, .. }) => (mean, Some(std), s.to_string()),
        Err(_) => {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            (mean, None, format!("{:.2}%", 100.0 * mean))
        }
    }
}

fn group_rows<K: Ord>(
    runs: &[RunSummary],
    key: impl Fn(&RunSummary) -> K,
    pair: impl Fn(&RunSummary) -> String,
) -> Vec<StatsRow> {
    let mut groups: BTreeMap<K, Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups.entry(key(r)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let first = g[0];
            let s: Vec<f64> = g.iter().map(|r| r.sampling_accuracy).collect();
            let e: Vec<f64> = g.iter().map(|r| r.expectation_accuracy).collect();
            let (sampling_mean, sampling_std, sampling) = stats(&s);
            let (expectation_mean, expectation_std, expectation) = stats(&e);
            StatsRow {
                dataset: first.dataset,
                conv: first.conv.name(),
                direction: first.direction.name(),
                pair: pair(first),
                n: g.len(),
                sampling_mean,
                sampling_std,
                sampling,
                expectation_mean,
                expectation_std,
                expectation,
            }
        })
        .collect()
}

/// Mean and std over repeats of each pair.
pub fn pair_rows(runs: &[RunSummary]) -> Vec<StatsRow> {
    group_rows(
        runs,
        |r| (r.dataset, r.conv, r.direction, r.pair.first, r.pair.second),
        |r| r.pair.to_string(),
    )
}

/// Mean and std over every run of a (dataset, unitary, direction) cell.
pub fn cell_rows(runs: &[RunSummary]) -> Vec<StatsRow> {
    group_rows(
        runs,
        |r| (r.dataset, r.conv, r.direction),
        |_| String::new(),
    )
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Run(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Run(e.to_string()))?;
    write_atomic(path, &bytes).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

fn write_tables(dir: &Path, runs: &[RunSummary], failures: &[Failure]) -> Result<(), CliError> {
    let mut sorted: Vec<&RunSummary> = runs.iter().collect();
    sorted.sort_by_key(|r| {
        (
            r.dataset,
            r.conv,
            r.direction,
            r.pair.first,
            r.pair.second,
            r.repeat,
        )
    });
    write_csv(
        &dir.join("runs.csv"),
        sorted.iter().map(|r| RunRow {
            id: &r.id,
            dataset: r.dataset,
            conv: r.conv.name(),
            direction: r.direction.name(),
            pair: r.pair.to_string(),
            repeat: r.repeat,
            sampling_accuracy: r.sampling_accuracy,
            expectation_accuracy: r.expectation_accuracy,
            analytic_sampling_accuracy: r.analytic_sampling_accuracy,
            final_loss: r.final_loss,
            train_size: r.train_size,
            test_size: r.test_size,
            distance_true: r.distance_true,
            distance_false: r.distance_false,
        }),
    )?;
    write_csv(&dir.join("pairs.csv"), pair_rows(runs))?;
    write_csv(&dir.join("cells.csv"), cell_rows(runs))?;
    write_csv(
        &dir.join("failures.csv"),
        failures.iter().map(|f| FailureRow {
            dataset: f.dataset,
            conv: f.conv.name(),
            direction: f.direction.name(),
            pair: f.pair.to_string(),
            repeat: f.repeat,
            error: &f.error,
        }),
    )
}

#[derive(Serialize)]
struct FailureRow<'a> {
    dataset: Dataset,
    conv: &'static str,
    direction: &'static str,
    pair: String,
    repeat: usize,
    error: &'a str,
}
