//! Dataset acquisition and decoding: IDX parsing, a verified on-disk cache,
//! and optional HTTP download.
//!
//! Files live in the cache as downloaded (gzip), addressed as
//! `<cache>/<dataset>/<name>.idx.gz`. Integrity is pinned by SHA-256 of the
//! *decompressed* payload, so any mirror serving the canonical bytes
//! verifies identically regardless of gzip framing. Checksums and URLs come
//! from a JSON catalog; a default catalog is compiled in and an alternative
//! can be loaded from disk (the repository bundles one for the small
//! fixture subset under `data/mnist-desk/`).

use crate::error::{Error, Result};
use flate2::read::GzDecoder;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Read;
use std::path::{Path, PathBuf};

/// Environment variable overriding the cache root.
pub const CACHE_DIR_ENV: &str = "IMSNN_CACHE_DIR";

/// One remote file: where to get it and what its decompressed payload must
/// hash to. An empty URL marks a cache-only entry.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    pub url: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub files: BTreeMap<String, FileSpec>,
}

/// Catalog of known datasets, keyed by dataset name.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceCatalog {
    pub datasets: BTreeMap<String, DatasetSpec>,
}

impl SourceCatalog {
    /// The compiled-in catalog (canonical MNIST mirrors).
    pub fn embedded() -> SourceCatalog {
        serde_json::from_str(include_str!("datasets.json"))
            .expect("embedded dataset catalog must parse")
    }

    pub fn from_path(path: &Path) -> Result<SourceCatalog> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    fn file(&self, dataset: &str, name: &str) -> Result<&FileSpec> {
        self.datasets
            .get(dataset)
            .ok_or_else(|| Error::Validation(format!("unknown dataset '{dataset}'")))?
            .files
            .get(name)
            .ok_or_else(|| Error::Validation(format!("dataset '{dataset}' has no file '{name}'")))
    }
}

/// Cache root resolution from explicit override, environment, and home
/// directory, in that order.
fn cache_dir_from(env: Option<OsString>, home: Option<OsString>) -> PathBuf {
    if let Some(dir) = env {
        return PathBuf::from(dir);
    }
    match home {
        Some(h) => Path::new(&h).join(".cache").join("imsnn"),
        None => PathBuf::from(".imsnn-cache"),
    }
}

/// `$IMSNN_CACHE_DIR`, else `$HOME/.cache/imsnn`, else `./.imsnn-cache`.
pub fn default_cache_dir() -> PathBuf {
    cache_dir_from(std::env::var_os(CACHE_DIR_ENV), std::env::var_os("HOME"))
}

/// How to resolve dataset files.
#[derive(Debug, Clone, Default)]
pub struct FetchOptions {
    /// Cache root; `None` uses [`default_cache_dir`].
    pub cache_dir: Option<PathBuf>,
    /// Never touch the network; a missing file is a [`Error::CacheMiss`].
    pub offline: bool,
    /// Re-download when the cached copy fails verification (instead of
    /// erroring out). Never overwrites a file that verifies.
    pub refresh: bool,
}

impl FetchOptions {
    pub fn cache_root(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(default_cache_dir)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn read_gz(path: &Path) -> Result<Vec<u8>> {
    let file = std::fs::File::open(path)?;
    let mut decoder = GzDecoder::new(std::io::BufReader::new(file));
    let mut bytes = Vec::new();
    decoder.read_to_end(&mut bytes)?;
    Ok(bytes)
}

fn download(url: &str, dest: &Path, name: &str) -> Result<()> {
    if url.is_empty() {
        return Err(Error::CacheMiss {
            path: dest.display().to_string(),
        });
    }
    let response = ureq::get(url).call().map_err(|e| Error::Download {
        name: name.to_string(),
        message: e.to_string(),
    })?;
    let mut body = Vec::new();
    response
        .into_reader()
        .read_to_end(&mut body)
        .map_err(|e| Error::Download {
            name: name.to_string(),
            message: e.to_string(),
        })?;
    if let Some(parent) = dest.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let part = dest.with_extension("part");
    std::fs::write(&part, &body)?;
    std::fs::rename(&part, dest)?;
    Ok(())
}

/// Return the decompressed, checksum-verified payload of one dataset file,
/// downloading into the cache if permitted and necessary.
pub fn fetch_payload(
    catalog: &SourceCatalog,
    dataset: &str,
    name: &str,
    opts: &FetchOptions,
) -> Result<Vec<u8>> {
    let spec = catalog.file(dataset, name)?;
    let path = opts
        .cache_root()
        .join(dataset)
        .join(format!("{name}.idx.gz"));

    if !path.is_file() {
        if opts.offline {
            return Err(Error::CacheMiss {
                path: path.display().to_string(),
            });
        }
        download(&spec.url, &path, name)?;
    }

    let mut payload = read_gz(&path)?;
    let mut actual = sha256_hex(&payload);
    if actual != spec.sha256 && opts.refresh && !opts.offline {
        download(&spec.url, &path, name)?;
        payload = read_gz(&path)?;
        actual = sha256_hex(&payload);
    }
    if actual != spec.sha256 {
        return Err(Error::ChecksumMismatch {
            name: format!("{dataset}/{name}"),
            expected: spec.sha256.clone(),
            actual,
        });
    }
    Ok(payload)
}

/// A decoded IDX tensor: u8 payload plus dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parse the IDX container format (big-endian header, unsigned-byte data).
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    let err = |offset: usize, message: String| Error::Idx { offset, message };
    if bytes.len() < 4 {
        return Err(err(0, format!("header needs 4 bytes, have {}", bytes.len())));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(err(0, "magic must start with two zero bytes".to_string()));
    }
    if bytes[2] != 0x08 {
        return Err(err(
            2,
            format!("unsupported element type 0x{:02x} (only unsigned byte 0x08)", bytes[2]),
        ));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 || ndims > 3 {
        return Err(err(3, format!("unsupported rank {ndims}")));
    }
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(err(
            4,
            format!("header needs {header_len} bytes, have {}", bytes.len()),
        ));
    }
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        let at = 4 + 4 * d;
        let raw = u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap());
        dims.push(raw as usize);
    }
    let expected: usize = dims.iter().product();
    let data = &bytes[header_len..];
    if data.len() != expected {
        return Err(err(
            header_len,
            format!(
                "dimensions {:?} imply {expected} data bytes, have {}",
                dims,
                data.len()
            ),
        ));
    }
    Ok(IdxArray {
        dims,
        data: data.to_vec(),
    })
}

/// A labelled image set, pixels kept as raw bytes.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    images: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn from_idx(images: IdxArray, labels: IdxArray) -> Result<Dataset> {
        if images.dims.len() != 3 {
            return Err(Error::Format(format!(
                "image tensor must be rank 3, got {:?}",
                images.dims
            )));
        }
        if labels.dims.len() != 1 {
            return Err(Error::Format(format!(
                "label tensor must be rank 1, got {:?}",
                labels.dims
            )));
        }
        if images.dims[0] != labels.dims[0] {
            return Err(Error::Format(format!(
                "{} images but {} labels",
                images.dims[0], labels.dims[0]
            )));
        }
        Ok(Dataset {
            rows: images.dims[1],
            cols: images.dims[2],
            images: images.data,
            labels: labels.data,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let px = self.pixels_per_image();
        &self.images[i * px..(i + 1) * px]
    }

    /// Pixels mapped to [0, 1] by dividing by 255.
    pub fn normalized_image(&self, i: usize) -> Vec<f64> {
        self.image(i).iter().map(|&b| b as f64 / 255.0).collect()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    /// Keep only the first `limit` samples. Errs when more samples are
    /// requested than exist — a silent shortfall would invalidate results.
    pub fn truncate(&mut self, limit: usize) -> Result<()> {
        if limit > self.len() {
            return Err(Error::Validation(format!(
                "requested {limit} samples but only {} available",
                self.len()
            )));
        }
        self.labels.truncate(limit);
        self.images.truncate(limit * self.pixels_per_image());
        Ok(())
    }
}

/// Load one split (`"train"` or `"test"`) of a dataset, verifying both files
/// against the catalog. `limit` trims to the first N samples.
pub fn load_split(
    catalog: &SourceCatalog,
    dataset: &str,
    split: &str,
    opts: &FetchOptions,
    limit: Option<usize>,
) -> Result<Dataset> {
    let images = parse_idx(&fetch_payload(catalog, dataset, &format!("{split}-images"), opts)?)?;
    let labels = parse_idx(&fetch_payload(catalog, dataset, &format!("{split}-labels"), opts)?)?;
    let mut set = Dataset::from_idx(images, labels)?;
    if let Some(limit) = limit {
        set.truncate(limit)?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn gz(bytes: &[u8]) -> Vec<u8> {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).unwrap();
        enc.finish().unwrap()
    }

    fn idx_images(images: &[[u8; 4]]) -> Vec<u8> {
        let mut bytes = vec![0, 0, 0x08, 3];
        bytes.extend((images.len() as u32).to_be_bytes());
        bytes.extend(2u32.to_be_bytes());
        bytes.extend(2u32.to_be_bytes());
        for img in images {
            bytes.extend_from_slice(img);
        }
        bytes
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut bytes = vec![0, 0, 0x08, 1];
        bytes.extend((labels.len() as u32).to_be_bytes());
        bytes.extend_from_slice(labels);
        bytes
    }

    /// Write a synthetic two-by-two-pixel dataset into a temp cache and
    /// return (catalog, options) pointing at it.
    fn synthetic_cache(dir: &Path) -> (SourceCatalog, FetchOptions) {
        let images = idx_images(&[[0, 64, 128, 255], [10, 20, 30, 40], [1, 2, 3, 4]]);
        let labels = idx_labels(&[7, 0, 2]);
        let test_images = idx_images(&[[5, 5, 5, 5]]);
        let test_labels = idx_labels(&[1]);
        let root = dir.join("tiny");
        std::fs::create_dir_all(&root).unwrap();
        let mut shas = BTreeMap::new();
        for (name, payload) in [
            ("train-images", &images),
            ("train-labels", &labels),
            ("test-images", &test_images),
            ("test-labels", &test_labels),
        ] {
            std::fs::write(root.join(format!("{name}.idx.gz")), gz(payload)).unwrap();
            shas.insert(name.to_string(), sha256_hex(payload));
        }
        let catalog_json = format!(
            r#"{{"datasets":{{"tiny":{{"files":{{
                "train-images":{{"url":"","sha256":"{}"}},
                "train-labels":{{"url":"","sha256":"{}"}},
                "test-images":{{"url":"","sha256":"{}"}},
                "test-labels":{{"url":"","sha256":"{}"}}
            }}}}}}}}"#,
            shas["train-images"], shas["train-labels"], shas["test-images"], shas["test-labels"]
        );
        let catalog: SourceCatalog = serde_json::from_str(&catalog_json).unwrap();
        let opts = FetchOptions {
            cache_dir: Some(dir.to_path_buf()),
            offline: true,
            refresh: false,
        };
        (catalog, opts)
    }

    #[test]
    fn loads_verifies_and_normalizes_a_synthetic_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let (catalog, opts) = synthetic_cache(dir.path());
        let train = load_split(&catalog, "tiny", "train", &opts, None).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!((train.rows, train.cols), (2, 2));
        assert_eq!(train.image(0), &[0, 64, 128, 255]);
        assert_eq!(train.label(0), 7);
        assert_eq!(train.normalized_image(0)[3], 1.0);
        assert_eq!(train.normalized_image(0)[0], 0.0);
        assert!((train.normalized_image(0)[1] - 64.0 / 255.0).abs() < 1e-15);
        let test = load_split(&catalog, "tiny", "test", &opts, None).unwrap();
        assert_eq!(test.len(), 1);
        assert_eq!(test.label(0), 1);
    }

    #[test]
    fn limit_trims_and_overlong_limit_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (catalog, opts) = synthetic_cache(dir.path());
        let train = load_split(&catalog, "tiny", "train", &opts, Some(2)).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(train.image(1), &[10, 20, 30, 40]);
        let err = load_split(&catalog, "tiny", "train", &opts, Some(5)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn missing_file_offline_is_a_cache_miss_not_a_download_error() {
        let dir = tempfile::tempdir().unwrap();
        let (catalog, opts) = synthetic_cache(dir.path());
        std::fs::remove_file(dir.path().join("tiny/train-labels.idx.gz")).unwrap();
        let err = load_split(&catalog, "tiny", "train", &opts, None).unwrap_err();
        assert!(matches!(err, Error::CacheMiss { .. }), "{err}");
    }

    #[test]
    fn tampered_payload_is_rejected_by_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let (catalog, opts) = synthetic_cache(dir.path());
        let path = dir.path().join("tiny/train-images.idx.gz");
        let mut payload = read_gz(&path).unwrap();
        let last = payload.len() - 1;
        payload[last] ^= 0xff;
        std::fs::write(&path, gz(&payload)).unwrap();
        let err = load_split(&catalog, "tiny", "train", &opts, None).unwrap_err();
        match err {
            Error::ChecksumMismatch { name, .. } => assert_eq!(name, "tiny/train-images"),
            other => panic!("expected checksum mismatch, got {other}"),
        }
    }

    #[test]
    fn idx_parser_reports_malformed_headers_with_offsets() {
        let good = idx_labels(&[1, 2, 3]);
        assert_eq!(parse_idx(&good).unwrap().dims, vec![3]);

        let mut bad_magic = good.clone();
        bad_magic[0] = 9;
        match parse_idx(&bad_magic).unwrap_err() {
            Error::Idx { offset, .. } => assert_eq!(offset, 0),
            other => panic!("{other}"),
        }

        let mut bad_type = good.clone();
        bad_type[2] = 0x0d;
        match parse_idx(&bad_type).unwrap_err() {
            Error::Idx { offset, .. } => assert_eq!(offset, 2),
            other => panic!("{other}"),
        }

        let mut truncated = good.clone();
        truncated.pop();
        match parse_idx(&truncated).unwrap_err() {
            Error::Idx { offset, .. } => assert_eq!(offset, 8),
            other => panic!("{other}"),
        }

        let mut bad_rank = good;
        bad_rank[3] = 0;
        assert!(parse_idx(&bad_rank).is_err());
    }

    #[test]
    fn mismatched_image_and_label_counts_are_rejected() {
        let images = parse_idx(&idx_images(&[[1, 2, 3, 4]])).unwrap();
        let labels = parse_idx(&idx_labels(&[1, 2])).unwrap();
        assert!(Dataset::from_idx(images, labels).is_err());
    }

    #[test]
    fn cache_dir_resolution_prefers_env_then_home() {
        assert_eq!(
            cache_dir_from(Some("/opt/x".into()), Some("/home/u".into())),
            PathBuf::from("/opt/x")
        );
        assert_eq!(
            cache_dir_from(None, Some("/home/u".into())),
            PathBuf::from("/home/u/.cache/imsnn")
        );
        assert_eq!(cache_dir_from(None, None), PathBuf::from(".imsnn-cache"));
    }

    #[test]
    fn embedded_catalog_parses_and_covers_both_splits() {
        let catalog = SourceCatalog::embedded();
        let mnist = &catalog.datasets["mnist"];
        for name in ["train-images", "train-labels", "test-images", "test-labels"] {
            let spec = &mnist.files[name];
            assert_eq!(spec.sha256.len(), 64);
            assert!(!spec.url.is_empty());
        }
    }
}
