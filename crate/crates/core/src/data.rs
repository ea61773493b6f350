//! IDX ingestion, PCA features and binary class-pair subsets.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::FEATURE_COUNT;
use crate::seeds::{derive_seed, rng};

pub const IMAGE_SIDE: usize = 28;
pub const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const N_CLASSES: u8 = 10;
/// Orthonormality tolerance of fitted components.
pub const ORTHO_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: magic number {found:#010x}, expected {expected:#010x}")]
    Magic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated, expected {expected} bytes but found {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: images are {rows}x{cols}, expected {IMAGE_SIDE}x{IMAGE_SIDE}")]
    Dimensions {
        path: PathBuf,
        rows: usize,
        cols: usize,
    },
    #[error("{path}: label {label} is not a class index")]
    BadLabel { path: PathBuf, label: u8 },
    #[error("invalid class pair ({0}, {1})")]
    InvalidPair(u8, u8),
    #[error("class pair {0} has no samples")]
    EmptyPair(ClassPair),
    #[error("{samples} samples cannot support {k} principal components")]
    TooFewSamples { samples: usize, k: usize },
    #[error("principal component {0} has zero variance")]
    ZeroVariance(usize),
    #[error("covariance eigendecomposition produced non-finite values")]
    Eigen,
    #[error("can draw at most {max} disjoint pairs, asked for {requested}")]
    TooManyPairs { requested: usize, max: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Two distinct classes; `first` maps to label 0 and `second` to label 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassPair {
    pub first: u8,
    pub second: u8,
}

impl ClassPair {
    pub fn new(first: u8, second: u8) -> Result<Self, DataError> {
        if first == second || first >= N_CLASSES || second >= N_CLASSES {
            return Err(DataError::InvalidPair(first, second));
        }
        Ok(ClassPair { first, second })
    }

    /// Binary label of an original class, if it belongs to the pair.
    pub fn label_of(&self, class: u8) -> Option<u8> {
        if class == self.first {
            Some(0)
        } else if class == self.second {
            Some(1)
        } else {
            None
        }
    }
}

impl fmt::Display for ClassPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.first, self.second)
    }
}

impl FromStr for ClassPair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once([',', '-', ':'])
            .ok_or_else(|| format!("class pair `{s}` should look like `1,4`"))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<u8>()
                .map_err(|_| format!("bad class `{t}`"))
        };
        ClassPair::new(parse(a)?, parse(b)?).map_err(|e| e.to_string())
    }
}

/// 28x28 greyscale images with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pixels: Vec<u8>,
    labels: Vec<u8>,
    pub split: Split,
}

impl RawDataset {
    pub fn new(pixels: Vec<u8>, labels: Vec<u8>, split: Split) -> Result<Self, DataError> {
        if pixels.len() != labels.len() * PIXELS {
            return Err(DataError::CountMismatch {
                images: pixels.len() / PIXELS,
                labels: labels.len(),
            });
        }
        Ok(RawDataset {
            pixels,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * PIXELS..(i + 1) * PIXELS]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Indices of samples belonging to `pair`, in file order.
    pub fn pair_indices(&self, pair: ClassPair) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| pair.label_of(self.labels[i]).is_some())
            .collect()
    }

    /// The samples at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> RawDataset {
        let mut pixels = Vec::with_capacity(indices.len() * PIXELS);
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        RawDataset {
            pixels,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        }
    }

    /// Samples of `pair`, optionally reduced to a uniformly drawn subset of
    /// `limit` samples (kept in file order).
    pub fn pair_subset<R: Rng + ?Sized>(
        &self,
        pair: ClassPair,
        limit: Option<usize>,
        rng: &mut R,
    ) -> RawDataset {
        let mut idx = self.pair_indices(pair);
        if let Some(n) = limit {
            if n < idx.len() {
                let mut chosen: Vec<usize> = rand::seq::index::sample(rng, idx.len(), n).into_vec();
                chosen.sort_unstable();
                idx = chosen.into_iter().map(|k| idx[k]).collect();
            }
        }
        self.select(&idx)
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let raw = std::fs::read(path).map_err(io_err(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(io_err(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated {
            path: path.to_path_buf(),
            expected: at + 4,
            actual: bytes.len(),
        })
}

fn parse_images(bytes: &[u8], path: &Path) -> Result<(usize, Vec<u8>), DataError> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(DataError::Magic {
            path: path.to_path_buf(),
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(DataError::Dimensions {
            path: path.to_path_buf(),
            rows,
            cols,
        });
    }
    let expected = 16 + count * PIXELS;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok((count, bytes[16..expected].to_vec()))
}

fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>, DataError> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(DataError::Magic {
            path: path.to_path_buf(),
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    let labels = bytes[8..expected].to_vec();
    if let Some(&label) = labels.iter().find(|&&l| l >= N_CLASSES) {
        return Err(DataError::BadLabel {
            path: path.to_path_buf(),
            label,
        });
    }
    Ok(labels)
}

/// Reads an IDX image file and its label file. Gzipped files are detected
/// by their header and decompressed transparently.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    split: Split,
) -> Result<RawDataset, DataError> {
    let (count, pixels) = parse_images(&read_maybe_gz(images_path)?, images_path)?;
    let labels = parse_labels(&read_maybe_gz(labels_path)?, labels_path)?;
    if labels.len() != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    RawDataset::new(pixels, labels, split)
}

/// Serializes a dataset back into the (uncompressed) IDX pair.
pub fn write_idx(
    dataset: &RawDataset,
    images: &mut impl Write,
    labels: &mut impl Write,
) -> std::io::Result<()> {
    images.write_all(&IMAGE_MAGIC.to_be_bytes())?;
    images.write_all(&(dataset.len() as u32).to_be_bytes())?;
    images.write_all(&(IMAGE_SIDE as u32).to_be_bytes())?;
    images.write_all(&(IMAGE_SIDE as u32).to_be_bytes())?;
    images.write_all(&dataset.pixels)?;
    labels.write_all(&LABEL_MAGIC.to_be_bytes())?;
    labels.write_all(&(dataset.len() as u32).to_be_bytes())?;
    labels.write_all(&dataset.labels)
}

fn pixel_row(image: &[u8]) -> impl Iterator<Item = f64> + '_ {
    image.iter().map(|&p| p as f64 / 255.0)
}

/// Principal components of one class pair, plus the training-set range of
/// every projected coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub pair: ClassPair,
    pub mean: Vec<f64>,
    /// `k` unit vectors of length [`PIXELS`], by decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component.
    pub explained_variance: Vec<f64>,
    pub per_feature_min: Vec<f64>,
    pub per_feature_max: Vec<f64>,
}

/// Fits `k` principal components to the `pair` samples of `train`.
///
/// Components are eigenvectors of the sample covariance; each is signed so
/// that its largest-magnitude entry is positive.
pub fn fit_pca(train: &RawDataset, pair: ClassPair, k: usize) -> Result<PcaModel, DataError> {
    let idx = train.pair_indices(pair);
    if idx.is_empty() {
        return Err(DataError::EmptyPair(pair));
    }
    if idx.len() <= k {
        return Err(DataError::TooFewSamples {
            samples: idx.len(),
            k,
        });
    }
    let n = idx.len();
    let x = DMatrix::from_row_iterator(
        n,
        PIXELS,
        idx.iter().flat_map(|&i| pixel_row(train.image(i))),
    );
    let mean: Vec<f64> = (0..PIXELS).map(|c| x.column(c).sum() / n as f64).collect();
    let mut centered = x;
    for (c, m) in mean.iter().enumerate() {
        centered.column_mut(c).add_scalar_mut(-m);
    }
    // constant pixels only add zero eigenvalues, and their zero rows can stall
    // the eigensolver, so decompose the covariance of the varying pixels
    let active: Vec<usize> = (0..PIXELS)
        .filter(|&c| centered.column(c).iter().any(|v| *v != 0.0))
        .collect();
    if active.len() < k {
        return Err(DataError::ZeroVariance(active.len()));
    }
    let reduced = centered.select_columns(&active);
    let cov = reduced.tr_mul(&reduced) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(DataError::Eigen);
    }
    let mut order: Vec<usize> = (0..active.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for (rank, &j) in order.iter().take(k).enumerate() {
        let var = eig.eigenvalues[j];
        if !(var > 1e-12 * total.max(f64::MIN_POSITIVE)) {
            return Err(DataError::ZeroVariance(rank));
        }
        let mut v = vec![0.0; PIXELS];
        for (&pixel, x) in active.iter().zip(eig.eigenvectors.column(j).iter()) {
            v[pixel] = *x;
        }
        let pivot = v.iter().enumerate().fold(
            0,
            |best, (i, x)| if x.abs() > v[best].abs() { i } else { best },
        );
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(var);
    }

    let mut model = PcaModel {
        pair,
        mean,
        components,
        explained_variance,
        per_feature_min: vec![f64::INFINITY; k],
        per_feature_max: vec![f64::NEG_INFINITY; k],
    };
    for &i in &idx {
        let p = model.project(train.image(i));
        for (f, v) in p.iter().enumerate() {
            model.per_feature_min[f] = model.per_feature_min[f].min(*v);
            model.per_feature_max[f] = model.per_feature_max[f].max(*v);
        }
    }
    if let Some(f) = (0..k).find(|&f| model.per_feature_min[f] >= model.per_feature_max[f]) {
        return Err(DataError::ZeroVariance(f));
    }
    Ok(model)
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Coordinates of one image along the components.
    pub fn project(&self, image: &[u8]) -> Vec<f64> {
        let centered: Vec<f64> = pixel_row(image)
            .zip(&self.mean)
            .map(|(p, m)| p - m)
            .collect();
        self.components
            .iter()
            .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Min-max normalization with the training range, clamped to `[0, 1]`,
    /// then scaled to `[0, pi]`.
    pub fn normalize(&self, projection: &[f64]) -> Vec<f64> {
        projection
            .iter()
            .enumerate()
            .map(|(f, v)| {
                let (lo, hi) = (self.per_feature_min[f], self.per_feature_max[f]);
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0) * PI
            })
            .collect()
    }

    /// Mean squared pixel error when reconstructing `images` from the first
    /// `k` components.
    pub fn reconstruction_error(&self, images: &RawDataset, k: usize) -> f64 {
        let k = k.min(self.k());
        let mut total = 0.0;
        for i in 0..images.len() {
            let img = images.image(i);
            let coords = self.project(img);
            let mut recon = self.mean.clone();
            for (c, &w) in self.components.iter().zip(&coords).take(k) {
                for (r, x) in recon.iter_mut().zip(c) {
                    *r += w * x;
                }
            }
            total += pixel_row(img)
                .zip(&recon)
                .map(|(p, r)| (p - r).powi(2))
                .sum::<f64>();
        }
        total / (images.len() * PIXELS) as f64
    }
}

/// Embedding-ready features for one class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub pair: ClassPair,
    pub features: Vec<[f64; FEATURE_COUNT]>,
    pub labels: Vec<u8>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Writes `f0..f15,label` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..FEATURE_COUNT).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (f, l) in self.features.iter().zip(&self.labels) {
            let mut row: Vec<String> = f.iter().map(|v| v.to_string()).collect();
            row.push(l.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| DataError::Csv(e.into()))?;
        Ok(())
    }
}

/// Projects and normalizes the `pair` samples of `dataset` with `model`.
pub fn featurize(
    model: &PcaModel,
    dataset: &RawDataset,
    pair: ClassPair,
) -> Result<FeatureSet, DataError> {
    assert_eq!(
        model.k(),
        FEATURE_COUNT,
        "embedding takes {FEATURE_COUNT} components"
    );
    let idx = dataset.pair_indices(pair);
    if idx.is_empty() {
        return Err(DataError::EmptyPair(pair));
    }
    let mut features = Vec::with_capacity(idx.len());
    let mut labels = Vec::with_capacity(idx.len());
    for &i in &idx {
        let norm = model.normalize(&model.project(dataset.image(i)));
        features.push(norm.try_into().expect("k == FEATURE_COUNT"));
        labels.push(pair.label_of(dataset.label(i)).expect("filtered to pair"));
    }
    Ok(FeatureSet {
        pair,
        features,
        labels,
    })
}

/// The four files of one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl DatasetFiles {
    pub const STEMS: [&'static str; 4] = [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ];

    /// The canonical file names inside `dir`, preferring `.gz` copies.
    pub fn in_dir(dir: &Path) -> Self {
        let pick = |stem: &str| {
            let gz = dir.join(format!("{stem}.gz"));
            if gz.exists() {
                gz
            } else {
                dir.join(stem)
            }
        };
        DatasetFiles {
            train_images: pick(Self::STEMS[0]),
            train_labels: pick(Self::STEMS[1]),
            test_images: pick(Self::STEMS[2]),
            test_labels: pick(Self::STEMS[3]),
        }
    }

    pub fn paths(&self) -> [&Path; 4] {
        [
            &self.train_images,
            &self.train_labels,
            &self.test_images,
            &self.test_labels,
        ]
    }

    pub fn load(&self) -> Result<(RawDataset, RawDataset), DataError> {
        Ok((
            load_idx(&self.train_images, &self.train_labels, Split::Train)?,
            load_idx(&self.test_images, &self.test_labels, Split::Test)?,
        ))
    }
}

/// PCA model and train/test features of one class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairData {
    pub pca: PcaModel,
    pub train: FeatureSet,
    pub test: FeatureSet,
}

/// Subsamples both splits of `pair` (when limits are given), fits PCA on
/// the training subset and featurizes both.
pub fn prepare_pair(
    train: &RawDataset,
    test: &RawDataset,
    pair: ClassPair,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
    seed: u64,
) -> Result<PairData, DataError> {
    let train = train.pair_subset(
        pair,
        train_limit,
        &mut rng(derive_seed(seed, &["subsample", "train"])),
    );
    let test = test.pair_subset(
        pair,
        test_limit,
        &mut rng(derive_seed(seed, &["subsample", "test"])),
    );
    let pca = fit_pca(&train, pair, FEATURE_COUNT)?;
    let train_fs = featurize(&pca, &train, pair)?;
    let test_fs = featurize(&pca, &test, pair)?;
    Ok(PairData {
        pca,
        train: train_fs,
        test: test_fs,
    })
}

/// `n_pairs` disjoint class pairs from a uniformly random perfect matching of
/// the ten classes.
pub fn sample_class_pairs<R: Rng + ?Sized>(
    rng: &mut R,
    n_pairs: usize,
) -> Result<Vec<ClassPair>, DataError> {
    let max = N_CLASSES as usize / 2;
    if n_pairs > max {
        return Err(DataError::TooManyPairs {
            requested: n_pairs,
            max,
        });
    }
    let mut classes: Vec<u8> = (0..N_CLASSES).collect();
    classes.shuffle(rng);
    Ok(classes
        .chunks(2)
        .take(n_pairs)
        .map(|c| ClassPair {
            first: c[0],
            second: c[1],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    /// Synthetic images: class c lights a class-specific band plus noise.
    pub(crate) fn synthetic(n_per_class: usize, classes: &[u8], seed: u64) -> RawDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n_per_class {
            for &c in classes {
                for p in 0..PIXELS {
                    let band = (p / IMAGE_SIDE) % 10 == c as usize;
                    let base = if band { 180.0 } else { 20.0 };
                    let v = base + rng.gen_range(-20.0..20.0) + (i % 7) as f64 * 3.0;
                    pixels.push(v.clamp(0.0, 255.0) as u8);
                }
                labels.push(c);
            }
        }
        RawDataset::new(pixels, labels, Split::Train).unwrap()
    }

    fn write_pair(dir: &Path, ds: &RawDataset) -> (PathBuf, PathBuf) {
        let ip = dir.join("images-idx3-ubyte");
        let lp = dir.join("labels-idx1-ubyte");
        let mut ib = Vec::new();
        let mut lb = Vec::new();
        write_idx(ds, &mut ib, &mut lb).unwrap();
        std::fs::write(&ip, ib).unwrap();
        std::fs::write(&lp, lb).unwrap();
        (ip, lp)
    }

    #[test]
    fn idx_round_trip_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synthetic(3, &[1, 4], 0);
        let (ip, lp) = write_pair(dir.path(), &ds);
        let loaded = load_idx(&ip, &lp, Split::Train).unwrap();
        assert_eq!(loaded, ds);

        let gz = dir.path().join("images.gz");
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
        enc.write_all(&std::fs::read(&ip).unwrap()).unwrap();
        std::fs::write(&gz, enc.finish().unwrap()).unwrap();
        assert_eq!(load_idx(&gz, &lp, Split::Train).unwrap(), ds);
    }

    #[test]
    fn idx_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synthetic(2, &[0, 1], 0);
        let (ip, lp) = write_pair(dir.path(), &ds);

        assert!(matches!(
            load_idx(&lp, &ip, Split::Train),
            Err(DataError::Magic { .. })
        ));

        let bytes = std::fs::read(&ip).unwrap();
        let short = dir.path().join("short");
        std::fs::write(&short, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(
            load_idx(&short, &lp, Split::Train),
            Err(DataError::Truncated { .. })
        ));
        std::fs::write(&short, &bytes[..6]).unwrap();
        assert!(matches!(
            load_idx(&short, &lp, Split::Train),
            Err(DataError::Truncated { .. })
        ));

        let mut labels = std::fs::read(&lp).unwrap();
        labels[7] -= 1;
        labels.pop();
        let fewer = dir.path().join("fewer");
        std::fs::write(&fewer, &labels).unwrap();
        assert!(matches!(
            load_idx(&ip, &fewer, Split::Train),
            Err(DataError::CountMismatch {
                images: 4,
                labels: 3
            })
        ));

        assert!(matches!(
            load_idx(&dir.path().join("missing"), &lp, Split::Train),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn pair_parsing() {
        assert_eq!(
            "1,4".parse::<ClassPair>().unwrap(),
            ClassPair {
                first: 1,
                second: 4
            }
        );
        assert!("4,4".parse::<ClassPair>().is_err());
        assert!("1,10".parse::<ClassPair>().is_err());
        assert!("14".parse::<ClassPair>().is_err());
    }

    #[test]
    fn pca_components_orthonormal_and_ordered() {
        let ds = synthetic(40, &[2, 7], 1);
        let pair = ClassPair::new(2, 7).unwrap();
        let model = fit_pca(&ds, pair, 16).unwrap();
        for a in 0..16 {
            for b in 0..16 {
                let dot: f64 = model.components[a]
                    .iter()
                    .zip(&model.components[b])
                    .map(|(x, y)| x * y)
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < ORTHO_TOL, "gram[{a}][{b}] = {dot}");
            }
        }
        assert!(model.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        for c in &model.components {
            let pivot = c
                .iter()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn pca_rejects_degenerate_data() {
        let pixels = vec![77u8; 30 * PIXELS];
        let ds = RawDataset::new(
            pixels,
            [vec![3u8; 15], vec![5u8; 15]].concat(),
            Split::Train,
        )
        .unwrap();
        let pair = ClassPair::new(3, 5).unwrap();
        assert!(matches!(
            fit_pca(&ds, pair, 16),
            Err(DataError::ZeroVariance(0))
        ));
        let other = ClassPair::new(0, 1).unwrap();
        assert!(matches!(
            fit_pca(&ds, other, 16),
            Err(DataError::EmptyPair(_))
        ));
        let small = synthetic(4, &[3, 5], 0);
        assert!(matches!(
            fit_pca(&small, pair, 16),
            Err(DataError::TooFewSamples { samples: 8, k: 16 })
        ));
    }

    #[test]
    fn pca_ignores_constant_pixels() {
        // blank border like real digits: most columns of the data are zero
        let mut ds = synthetic(40, &[2, 5], 8);
        for i in 0..ds.len() {
            for p in 0..PIXELS {
                let (r, c) = (p / IMAGE_SIDE, p % IMAGE_SIDE);
                if !(6..22).contains(&r) || !(6..22).contains(&c) {
                    ds.pixels[i * PIXELS + p] = 0;
                }
            }
        }
        let model = fit_pca(&ds, ClassPair::new(2, 5).unwrap(), 16).unwrap();
        for c in &model.components {
            assert!(c.iter().all(|x| x.is_finite()));
            assert!((c.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < ORTHO_TOL);
            assert_eq!(c[0], 0.0);
        }
    }

    #[test]
    fn featurize_range_and_endpoints() {
        let ds = synthetic(30, &[0, 3, 9], 2);
        let pair = ClassPair::new(9, 0).unwrap();
        let model = fit_pca(&ds, pair, 16).unwrap();
        let fs = featurize(&model, &ds, pair).unwrap();
        assert_eq!(fs.len(), 60);
        assert_eq!(fs.count_label(0), 30);
        assert_eq!(fs.count_label(1), 30);
        for f in 0..16 {
            let col: Vec<f64> = fs.features.iter().map(|v| v[f]).collect();
            assert!(col.iter().all(|v| (0.0..=PI).contains(v)));
            assert!(col.contains(&PI), "feature {f} max");
            assert!(col.contains(&0.0), "feature {f} min");
        }
        // first class of the pair is label 0
        let first = ds.pair_indices(pair)[0];
        assert_eq!(pair.label_of(ds.label(first)), Some(fs.labels[0]));
        // bit-identical on repeat
        assert_eq!(featurize(&model, &ds, pair).unwrap(), fs);
    }

    #[test]
    fn reconstruction_error_non_increasing() {
        let ds = synthetic(40, &[1, 6], 3);
        let pair = ClassPair::new(1, 6).unwrap();
        let model = fit_pca(&ds, pair, 16).unwrap();
        let sub = ds.select(&ds.pair_indices(pair));
        let errs: Vec<f64> = [1, 4, 16]
            .iter()
            .map(|&k| model.reconstruction_error(&sub, k))
            .collect();
        assert!(errs[0] >= errs[1] && errs[1] >= errs[2], "{errs:?}");
    }

    #[test]
    fn class_pairs_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pairs = sample_class_pairs(&mut rng, 5).unwrap();
        let seen: HashSet<u8> = pairs.iter().flat_map(|p| [p.first, p.second]).collect();
        assert_eq!(seen.len(), 10);
        let again = sample_class_pairs(&mut ChaCha8Rng::seed_from_u64(42), 5).unwrap();
        assert_eq!(pairs, again);
        assert_eq!(sample_class_pairs(&mut rng, 2).unwrap().len(), 2);
        assert!(matches!(
            sample_class_pairs(&mut rng, 6),
            Err(DataError::TooManyPairs { .. })
        ));
    }

    #[test]
    fn csv_export_shape() {
        let fs = FeatureSet {
            pair: ClassPair::new(0, 1).unwrap(),
            features: vec![[0.5; 16], [1.0; 16]],
            labels: vec![0, 1],
        };
        let mut buf = Vec::new();
        fs.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("f0,f1,") && lines[0].ends_with("f15,label"));
        assert!(lines[2].ends_with(",1"));
    }

    #[test]
    fn subset_is_deterministic_and_sorted() {
        let ds = synthetic(20, &[4, 5], 4);
        let pair = ClassPair::new(4, 5).unwrap();
        let a = ds.pair_subset(pair, Some(10), &mut ChaCha8Rng::seed_from_u64(1));
        let b = ds.pair_subset(pair, Some(10), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let all = ds.pair_subset(pair, None, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(all.len(), 40);
    }
}
