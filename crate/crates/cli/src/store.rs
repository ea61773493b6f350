//! On-disk artifacts: dataset loading and fetching, the feature cache and
//! atomic writes.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use md5::Md5;
use serde::Serialize;
use sha2::{Digest, Sha256};

use revqc::data::{prepare_pair, ClassPair, DatasetFiles, PairData, RawDataset};
use revqc::seeds::derive_seed;

use crate::config::{canonical, Dataset, DatasetSource, Hyper, Settings};
use crate::CliError;

pub const CACHE_FORMAT: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Short content address of a serializable value.
pub fn content_id<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable");
    sha256_hex(&json)[..16].to_string()
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Checks `bytes` against `md5:<hex>` or `sha256:<hex>`.
pub fn verify_checksum(name: &str, bytes: &[u8], expected: &str) -> Result<(), CliError> {
    let (algo, want) = expected.split_once(':').ok_or_else(|| {
        CliError::Usage(format!(
            "checksum for {name} must be md5:<hex> or sha256:<hex>"
        ))
    })?;
    let got = match algo {
        "md5" => hex::encode(Md5::digest(bytes)),
        "sha256" => sha256_hex(bytes),
        other => {
            return Err(CliError::Usage(format!(
                "unsupported checksum algorithm `{other}`"
            )))
        }
    };
    if !got.eq_ignore_ascii_case(want) {
        return Err(CliError::Data(format!(
            "{name}: {algo} is {got}, expected {want}"
        )));
    }
    Ok(())
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Both splits of a dataset plus a fingerprint of the file contents.
pub struct Loaded {
    pub train: RawDataset,
    pub test: RawDataset,
    pub fingerprint: String,
}

pub fn load_dataset(source: &DatasetSource) -> Result<Loaded, CliError> {
    let files = DatasetFiles::in_dir(&source.dir);
    let mut hasher = Sha256::new();
    for path in files.paths() {
        let bytes =
            fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if let Some(sum) = source.checksums.get(name) {
            verify_checksum(name, &bytes, sum)?;
        }
        hasher.update(&bytes);
    }
    let (train, test) = files.load().map_err(data_err)?;
    Ok(Loaded {
        train,
        test,
        fingerprint: hex::encode(hasher.finalize()),
    })
}

/// Downloads any missing archive of `ds` into its directory and verifies it.
pub fn fetch(ds: Dataset, source: &DatasetSource) -> Result<Vec<PathBuf>, CliError> {
    let (default_url, default_sums) = canonical(ds);
    let base = source.base_url.as_deref().unwrap_or(default_url);
    fs::create_dir_all(&source.dir).map_err(data_err)?;
    let mut fetched = Vec::new();
    for (name, default_sum) in default_sums {
        let expected = source
            .checksums
            .get(name)
            .map(String::as_str)
            .unwrap_or(default_sum);
        let dest = source.dir.join(name);
        if dest.exists() {
            verify_checksum(name, &fs::read(&dest).map_err(data_err)?, expected)?;
            continue;
        }
        let url = format!("{base}{name}");
        let mut body = Vec::new();
        ureq::get(&url)
            .call()
            .map_err(|e| CliError::Data(format!("fetching {url}: {e}")))?
            .into_body()
            .into_reader()
            .read_to_end(&mut body)
            .map_err(|e| CliError::Data(format!("fetching {url}: {e}")))?;
        verify_checksum(name, &body, expected)?;
        write_atomic(&dest, &body).map_err(data_err)?;
        fetched.push(dest);
    }
    Ok(fetched)
}

#[derive(Serialize)]
struct CacheKey<'a> {
    format: u32,
    dataset: Dataset,
    fingerprint: &'a str,
    pair: ClassPair,
    subsample: Option<usize>,
    test_subsample: Option<usize>,
    data_seed: u64,
}

/// Seed of the subsample draw for one pair.
pub fn data_seed(master: u64, ds: Dataset, pair: ClassPair) -> u64 {
    derive_seed(master, &["data", ds.name(), &pair.to_string()])
}

pub fn cache_path(
    out_dir: &Path,
    ds: Dataset,
    fingerprint: &str,
    pair: ClassPair,
    master: u64,
    hyper: &Hyper,
) -> PathBuf {
    let key = CacheKey {
        format: CACHE_FORMAT,
        dataset: ds,
        fingerprint,
        pair,
        subsample: hyper.subsample,
        test_subsample: hyper.test_subsample,
        data_seed: data_seed(master, ds, pair),
    };
    out_dir.join("cache").join(ds.name()).join(format!(
        "pair-{}-{}-{}.json",
        pair.first,
        pair.second,
        content_id(&key)
    ))
}

fn hash_path(entry: &Path) -> PathBuf {
    entry.with_extension("json.sha256")
}

/// Reads a cache entry if present and intact.
fn read_cached(entry: &Path) -> Option<PairData> {
    let bytes = fs::read(entry).ok()?;
    let recorded = fs::read_to_string(hash_path(entry)).ok()?;
    if recorded.trim() != sha256_hex(&bytes) {
        return None;
    }
    serde_json::from_slice(&bytes).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    /// An entry existed but failed its integrity check.
    Repaired,
}

/// Features of one pair, from the cache when possible.
pub fn pair_features(
    settings: &Settings,
    ds: Dataset,
    data: &Loaded,
    pair: ClassPair,
) -> Result<(PairData, CacheStatus), CliError> {
    let entry = cache_path(
        &settings.out_dir,
        ds,
        &data.fingerprint,
        pair,
        settings.seed,
        &settings.hyper,
    );
    let existed = entry.exists();
    if let Some(cached) = read_cached(&entry) {
        return Ok((cached, CacheStatus::Hit));
    }
    let fresh = prepare_pair(
        &data.train,
        &data.test,
        pair,
        settings.hyper.subsample,
        settings.hyper.test_subsample,
        data_seed(settings.seed, ds, pair),
    )
    .map_err(data_err)?;
    if fresh.train.count_label(0) == 0 || fresh.train.count_label(1) == 0 || fresh.test.is_empty() {
        return Err(CliError::Data(format!(
            "pair {pair} lacks samples of both classes"
        )));
    }
    let bytes = serde_json::to_vec(&fresh).map_err(data_err)?;
    let io = |e: std::io::Error| CliError::Run(format!("{}: {e}", entry.display()));
    write_atomic(&entry, &bytes).map_err(io)?;
    write_atomic(&hash_path(&entry), sha256_hex(&bytes).as_bytes()).map_err(io)?;
    let status = if existed {
        CacheStatus::Repaired
    } else {
        CacheStatus::Miss
    };
    Ok((fresh, status))
}
