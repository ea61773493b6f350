//! Settings resolved from defaults, an optional TOML file and flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use revqc::circuits::{ConvKind, Direction};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Mnist,
    Fashion,
}

impl Dataset {
    pub fn name(self) -> &'static str {
        match self {
            Dataset::Mnist => "mnist",
            Dataset::Fashion => "fashion",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" | "digits" => Ok(Dataset::Mnist),
            "fashion" | "fashion-mnist" => Ok(Dataset::Fashion),
            other => Err(format!(
                "unknown dataset `{other}` (expected mnist or fashion)"
            )),
        }
    }
}

/// Where a dataset lives and how to fetch and verify it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub dir: PathBuf,
    #[serde(default)]
    pub base_url: Option<String>,
    /// File name to `md5:<hex>` or `sha256:<hex>`, checked on every load.
    #[serde(default)]
    pub checksums: BTreeMap<String, String>,
}

/// Published location and MD5 sums of the full archives, used by `--fetch`
/// unless the config names others.
pub fn canonical(ds: Dataset) -> (&'static str, [(&'static str, &'static str); 4]) {
    match ds {
        Dataset::Mnist => (
            "https://ossci-datasets.s3.amazonaws.com/mnist/",
            [
                (
                    "train-images-idx3-ubyte.gz",
                    "md5:f68b3c2dcbeaaa9fbdd348bbdeb94873",
                ),
                (
                    "train-labels-idx1-ubyte.gz",
                    "md5:d53e105ee54ea40749a09fcbcd1e9432",
                ),
                (
                    "t10k-images-idx3-ubyte.gz",
                    "md5:9fb629c4189551a2d022fa330f9573f3",
                ),
                (
                    "t10k-labels-idx1-ubyte.gz",
                    "md5:ec29112dd5afa0611ce80d1b7f02629c",
                ),
            ],
        ),
        Dataset::Fashion => (
            "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
            [
                (
                    "train-images-idx3-ubyte.gz",
                    "md5:8d4fb7e6c68d591d4c3dfef9ec88bf0d",
                ),
                (
                    "train-labels-idx1-ubyte.gz",
                    "md5:25c81989df183df01b3e8a0aad5dffbe",
                ),
                (
                    "t10k-images-idx3-ubyte.gz",
                    "md5:bef4ecab320f06d8554ea6380940ec79",
                ),
                (
                    "t10k-labels-idx1-ubyte.gz",
                    "md5:bb300cfdad3c16e7a12a480ee83cd310",
                ),
            ],
        ),
    }
}

fn default_sources() -> BTreeMap<Dataset, DatasetSource> {
    let src = |dir: &str| DatasetSource {
        dir: dir.into(),
        base_url: None,
        checksums: BTreeMap::new(),
    };
    BTreeMap::from([
        (Dataset::Mnist, src("data/mnist-desk")),
        (Dataset::Fashion, src("data/fashion-desk")),
    ])
}

/// Contents of a config file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub steps: Option<usize>,
    pub batch: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub subsample: Option<usize>,
    pub test_subsample: Option<usize>,
    pub n_pairs: Option<usize>,
    pub repeats: Option<usize>,
    pub shared_pairs: Option<bool>,
    pub datasets: Option<Vec<String>>,
    pub conv: Option<Vec<String>>,
    pub directions: Option<Vec<String>>,
    #[serde(default)]
    pub data: BTreeMap<String, DatasetSource>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Flag values; `None` where the flag was not given.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub steps: Option<usize>,
    pub batch: Option<usize>,
    pub learning_rate: Option<f64>,
    pub subsample: Option<usize>,
    pub test_subsample: Option<usize>,
    pub n_pairs: Option<usize>,
    pub repeats: Option<usize>,
    pub shared_pairs: Option<bool>,
    pub datasets: Option<Vec<Dataset>>,
    pub conv: Option<Vec<ConvKind>>,
    pub directions: Option<Vec<Direction>>,
    pub data_dir: Option<PathBuf>,
}

/// Hyperparameters that change what a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub subsample: Option<usize>,
    pub test_subsample: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub hyper: Hyper,
    pub n_pairs: usize,
    pub repeats: usize,
    pub shared_pairs: bool,
    pub datasets: Vec<Dataset>,
    pub conv: Vec<ConvKind>,
    pub directions: Vec<Direction>,
    pub sources: BTreeMap<Dataset, DatasetSource>,
}

fn parse_list<T: FromStr>(key: &str, items: &[String]) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    items
        .iter()
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| CliError::Usage(format!("config `{key}`: {e}")))
        })
        .collect()
}

impl Settings {
    /// Flags win over the file, the file wins over defaults.
    pub fn resolve(file: FileConfig, flags: Overrides) -> Result<Self, CliError> {
        let mut sources = default_sources();
        for (name, src) in file.data {
            let ds: Dataset = name.parse().map_err(CliError::Usage)?;
            sources.insert(ds, src);
        }
        let datasets = match (flags.datasets, file.datasets) {
            (Some(d), _) => d,
            (None, Some(d)) => parse_list("datasets", &d)?,
            (None, None) => vec![Dataset::Mnist],
        };
        if let Some(dir) = flags.data_dir {
            let ds = match datasets.as_slice() {
                [one] => *one,
                _ => {
                    return Err(CliError::Usage(
                        "--data-dir needs exactly one --dataset".into(),
                    ))
                }
            };
            sources.get_mut(&ds).expect("default source").dir = dir;
        }
        let conv = match (flags.conv, file.conv) {
            (Some(c), _) => c,
            (None, Some(c)) => parse_list("conv", &c)?,
            (None, None) => ConvKind::ALL.to_vec(),
        };
        let directions = match (flags.directions, file.directions) {
            (Some(d), _) => d,
            (None, Some(d)) => parse_list("directions", &d)?,
            (None, None) => vec![Direction::Forward, Direction::Reversed],
        };
        let settings = Settings {
            seed: flags.seed.or(file.seed).unwrap_or(0),
            out_dir: flags
                .out_dir
                .or(file.out_dir)
                .unwrap_or_else(|| "results".into()),
            workers: flags.workers.or(file.workers).unwrap_or(1),
            hyper: Hyper {
                steps: flags.steps.or(file.steps).unwrap_or(200),
                batch: flags.batch.or(file.batch).unwrap_or(25),
                learning_rate: flags.learning_rate.or(file.learning_rate).unwrap_or(0.01),
                beta1: file.beta1.unwrap_or(0.9),
                beta2: file.beta2.unwrap_or(0.999),
                subsample: flags.subsample.or(file.subsample),
                test_subsample: flags.test_subsample.or(file.test_subsample),
            },
            n_pairs: flags.n_pairs.or(file.n_pairs).unwrap_or(5),
            repeats: flags.repeats.or(file.repeats).unwrap_or(3),
            shared_pairs: flags.shared_pairs.or(file.shared_pairs).unwrap_or(false),
            datasets,
            conv,
            directions,
            sources,
        };
        settings.validate()?;
        Ok(settings)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Usage(m.into()));
        if self.datasets.is_empty() || self.conv.is_empty() || self.directions.is_empty() {
            return bad("dataset, conv and direction selections must be non-empty");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if self.n_pairs == 0 || self.n_pairs > 5 {
            return bad("n_pairs must be between 1 and 5");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.hyper.batch == 0 {
            return bad("batch must be positive");
        }
        if !(self.hyper.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    pub fn source(&self, ds: Dataset) -> &DatasetSource {
        &self.sources[&ds]
    }
}
