mod config;
mod runner;
mod store;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use revqc::circuits::{ConvKind, Direction};
use revqc::data::ClassPair;

use config::{Dataset, FileConfig, Overrides, Settings};
use runner::{RunSpec, RUN_FORMAT};
use store::{write_atomic, CacheStatus};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Run(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "revqc",
    version,
    about = "Train and evaluate forward and reversed quantum convolutional classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit PCA and cache features for class pairs.
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Pair to prepare, e.g. `3,8`. Defaults to every pair a sweep would draw.
        #[arg(long = "pair")]
        pairs: Vec<ClassPair>,
        /// Download missing archives before loading.
        #[arg(long)]
        fetch: bool,
    },
    /// Train and evaluate one model.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pair: ClassPair,
        #[arg(long, default_value_t = 0)]
        repeat: usize,
        /// Retrain even if a completed run exists.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        exports: Exports,
    },
    /// Run the full grid and write aggregated tables.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Number of class pairs per unitary (at most 5).
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Use the same class pairs for every unitary.
        #[arg(long)]
        shared_pairs: bool,
        #[arg(long)]
        force: bool,
    },
    /// Write visualization data for a completed run.
    Export {
        #[command(flatten)]
        common: Common,
        /// Run id (directory name under runs/) or path to a run directory.
        #[arg(long)]
        run: String,
        #[command(flatten)]
        exports: Exports,
        /// Test-set features as CSV.
        #[arg(long, value_name = "PATH")]
        export_features: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    dataset: Option<Vec<Dataset>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Directory holding the IDX files of the selected dataset.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Training images kept per pair.
    #[arg(long)]
    subsample: Option<usize>,
    /// Test images kept per pair.
    #[arg(long)]
    test_subsample: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    conv: Option<Vec<ConvKind>>,
    #[arg(long, value_delimiter = ',')]
    direction: Option<Vec<Direction>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct Exports {
    /// Output-wire expectations of the test set as CSV.
    #[arg(long, value_name = "PATH")]
    export_histogram: Option<PathBuf>,
    /// Reversal centers as CSV; distances go to `<stem>-distances.csv`.
    #[arg(long, value_name = "PATH")]
    export_receptive_field: Option<PathBuf>,
}

impl Common {
    fn settings(&self, extra: Overrides) -> Result<Settings, CliError> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let flags = Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            workers: self.workers,
            steps: self.steps,
            batch: self.batch,
            learning_rate: self.lr,
            subsample: self.subsample,
            test_subsample: self.test_subsample,
            datasets: self.dataset.clone(),
            conv: self.conv.clone(),
            directions: self.direction.clone(),
            data_dir: self.data_dir.clone(),
            ..extra
        };
        Settings::resolve(file, flags)
    }
}

fn only<T: Copy>(items: &[T], what: &str) -> Result<T, CliError> {
    match items {
        [one] => Ok(*one),
        _ => Err(CliError::Usage(format!("run needs exactly one {what}"))),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Run(format!("{}: {e}", path.display()))
}

fn write_exports(
    exports: &Exports,
    run_dir: &Path,
    data: &revqc::data::PairData,
) -> Result<(), CliError> {
    if let Some(path) = &exports.export_histogram {
        let src = run_dir.join("histogram.csv");
        let bytes = fs::read(&src).map_err(io_err(&src))?;
        write_atomic(path, &bytes).map_err(io_err(path))?;
        println!("histogram: {}", path.display());
    }
    if let Some(path) = &exports.export_receptive_field {
        let rf = runner::receptive_field(run_dir, data)?;
        let mut centers = Vec::new();
        rf.write_centers_csv(&mut centers)
            .map_err(|e| CliError::Run(e.to_string()))?;
        write_atomic(path, &centers).map_err(io_err(path))?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("receptive-field");
        let dist_path = path.with_file_name(format!("{stem}-distances.csv"));
        let mut dist = Vec::new();
        rf.write_distances_csv(&mut dist)
            .map_err(|e| CliError::Run(e.to_string()))?;
        write_atomic(&dist_path, &dist).map_err(io_err(&dist_path))?;
        let (t, f) = rf.mean_true_false();
        println!(
            "receptive field: {} and {} (mean distance true {t:.4}, other {f:.4})",
            path.display(),
            dist_path.display()
        );
    }
    Ok(())
}

fn prepare(common: &Common, pairs: &[ClassPair], fetch: bool) -> Result<(), CliError> {
    let settings = common.settings(Overrides::default())?;
    for &ds in &settings.datasets {
        if fetch {
            for path in store::fetch(ds, settings.source(ds))? {
                println!("fetched {}", path.display());
            }
        }
        let loaded = store::load_dataset(settings.source(ds))?;
        let mut wanted = pairs.to_vec();
        if wanted.is_empty() {
            for &conv in &settings.conv {
                wanted.extend(sweep::draw_pairs(&settings, ds, conv)?);
            }
            wanted.sort();
            wanted.dedup();
        }
        for pair in wanted {
            let (data, status) = store::pair_features(&settings, ds, &loaded, pair)?;
            let status = match status {
                CacheStatus::Hit => "cached",
                CacheStatus::Miss => "computed",
                CacheStatus::Repaired => "recomputed (corrupt cache entry)",
            };
            println!(
                "{ds} {pair}: {} train, {} test, {status}",
                data.train.len(),
                data.test.len()
            );
        }
    }
    Ok(())
}

fn run(
    common: &Common,
    pair: ClassPair,
    repeat: usize,
    force: bool,
    exports: &Exports,
) -> Result<(), CliError> {
    let settings = common.settings(Overrides::default())?;
    let ds = only(&settings.datasets, "--dataset")?;
    let conv = only(&settings.conv, "--conv")?;
    let direction = only(&settings.directions, "--direction")?;
    let loaded = store::load_dataset(settings.source(ds))?;
    let (data, _) = store::pair_features(&settings, ds, &loaded, pair)?;
    let spec = RunSpec {
        format: RUN_FORMAT,
        dataset: ds,
        pair,
        conv,
        direction,
        repeat,
        master_seed: settings.seed,
        hyper: settings.hyper,
        data_fingerprint: loaded.fingerprint.clone(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| CliError::Run(e.to_string()))?;
    let outcome = pool.install(|| runner::execute(&spec, &data, &settings.out_dir, force))?;
    let s = &outcome.summary;
    println!(
        "{ds} {} {} {pair} repeat {repeat}: sampling {:.4}, expectation {:.4}{}",
        conv.name(),
        direction.name(),
        s.sampling_accuracy,
        s.expectation_accuracy,
        if outcome.reused {
            " (existing run)"
        } else {
            ""
        }
    );
    println!("run: {}", outcome.dir.display());
    pool.install(|| write_exports(exports, &outcome.dir, &data))
}

fn run_sweep(
    common: &Common,
    pairs: Option<usize>,
    repeats: Option<usize>,
    shared_pairs: bool,
    force: bool,
) -> Result<(), CliError> {
    let settings = common.settings(Overrides {
        n_pairs: pairs,
        repeats,
        shared_pairs: shared_pairs.then_some(true),
        ..Overrides::default()
    })?;
    let result = sweep::sweep(&settings, force)?;
    for cell in sweep::cell_rows(&result.runs) {
        println!(
            "{} {} {}: sampling {}, expectation {} (n = {})",
            cell.dataset, cell.conv, cell.direction, cell.sampling, cell.expectation, cell.n
        );
    }
    println!(
        "{} runs ({} reused), {} failed; tables in {}",
        result.runs.len() + result.failures.len(),
        result.reused,
        result.failures.len(),
        result.table_dir.display()
    );
    if result.failures.is_empty() {
        Ok(())
    } else {
        for f in &result.failures {
            eprintln!(
                "failed: {} {} {} {} repeat {}: {}",
                f.dataset,
                f.conv.name(),
                f.direction.name(),
                f.pair,
                f.repeat,
                f.error
            );
        }
        Err(CliError::Run(format!(
            "{} runs failed",
            result.failures.len()
        )))
    }
}

fn export(
    common: &Common,
    run: &str,
    exports: &Exports,
    features: Option<&Path>,
) -> Result<(), CliError> {
    let settings = common.settings(Overrides::default())?;
    let as_path = PathBuf::from(run);
    let dir = if as_path.is_dir() {
        as_path
    } else {
        settings.out_dir.join("runs").join(run)
    };
    if !runner::is_complete(&dir) {
        return Err(CliError::Usage(format!(
            "{} is not a completed run",
            dir.display()
        )));
    }
    let spec = runner::read_spec(&dir)?;
    let loaded = store::load_dataset(settings.source(spec.dataset))?;
    if loaded.fingerprint != spec.data_fingerprint {
        return Err(CliError::Data(format!(
            "dataset files of {} differ from those the run was trained on",
            spec.dataset
        )));
    }
    let run_settings = Settings {
        seed: spec.master_seed,
        hyper: spec.hyper,
        ..settings
    };
    let (data, _) = store::pair_features(&run_settings, spec.dataset, &loaded, spec.pair)?;
    if let Some(path) = features {
        let mut buf = Vec::new();
        data.test
            .write_csv(&mut buf)
            .map_err(|e| CliError::Run(e.to_string()))?;
        write_atomic(path, &buf).map_err(io_err(path))?;
        println!("features: {}", path.display());
    }
    write_exports(exports, &dir, &data)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prepare {
            common,
            pairs,
            fetch,
        } => prepare(&common, &pairs, fetch),
        Command::Run {
            common,
            pair,
            repeat,
            force,
            exports,
        } => run(&common, pair, repeat, force, &exports),
        Command::Sweep {
            common,
            pairs,
            repeats,
            shared_pairs,
            force,
        } => run_sweep(&common, pairs, repeats, shared_pairs, force),
        Command::Export {
            common,
            run,
            exports,
            export_features,
        } => export(&common, &run, &exports, export_features.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
