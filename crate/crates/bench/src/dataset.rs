//! Synthetic generators, CSV / LIBSVM loaders and train/validation splits.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use dfw::models::Sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};

/// Labelled splits sharing one feature dimension and label set.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl Dataset {
    /// SHA-256 over every split's features (little-endian bit patterns) and
    /// labels, as lowercase hex.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for split in [&self.train, &self.val, &self.test] {
            h.update((split.len() as u64).to_le_bytes());
            for s in split {
                for x in &s.features {
                    h.update(x.to_bits().to_le_bytes());
                }
                h.update((s.label as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// [`Dataset::checksum`] of [`SyntheticConfig::reference_blobs`].
pub const REFERENCE_BLOBS_SHA256: &str =
    "baa6c6c72225f68d5dda03b6117a1057cd1c24861564ebabb1c2ec943fbf1de8";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    /// One isotropic Gaussian per class, means at `c * e_k`.
    GaussianBlobs,
    /// Interleaved planar spiral arms, padded with noise dimensions.
    Spirals,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub kind: SyntheticKind,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Standard deviation of the per-coordinate Gaussian noise.
    pub noise: f64,
    /// Distance between any two class means (blobs only).
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// The fixed 10-class blobs set: 5000/1000/1000 samples, `d = 20`,
    /// noise 1, means `6.5` apart.
    pub fn reference_blobs() -> Self {
        Self {
            kind: SyntheticKind::GaussianBlobs,
            n_train: 5000,
            n_val: 1000,
            n_test: 1000,
            input_dim: 20,
            num_classes: 10,
            noise: 1.0,
            separation: 6.5,
            seed: 0,
        }
    }

    pub fn reference_spirals() -> Self {
        Self {
            kind: SyntheticKind::Spirals,
            input_dim: 2,
            num_classes: 3,
            noise: 0.05,
            ..Self::reference_blobs()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.input_dim == 0 {
            return Err(BenchError::Config(
                "synthetic data needs at least one training sample and one feature".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(BenchError::Config("need at least two classes".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(BenchError::Config(format!(
                "noise must be >= 0, got {}",
                self.noise
            )));
        }
        match self.kind {
            SyntheticKind::GaussianBlobs if self.num_classes > self.input_dim => {
                Err(BenchError::Config(format!(
                    "{} blob means need at least as many dimensions, got {}",
                    self.num_classes, self.input_dim
                )))
            }
            SyntheticKind::Spirals if self.input_dim < 2 => Err(BenchError::Config(
                "spirals need at least two dimensions".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Deterministic labelled data. Classes are balanced, samples shuffled
/// before splitting, and every feature is standardized with the training
/// split's mean and standard deviation.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let total = config.n_train + config.n_val + config.n_test;
    let (d, k) = (config.input_dim, config.num_classes);
    let mut samples: Vec<Sample> = (0..total)
        .map(|i| {
            let label = i % k;
            let mut x: Vec<f64> = (0..d)
                .map(|_| config.noise * normal.sample(&mut rng))
                .collect();
            match config.kind {
                SyntheticKind::GaussianBlobs => {
                    x[label] += config.separation / std::f64::consts::SQRT_2;
                }
                SyntheticKind::Spirals => {
                    let t: f64 = rng.random_range(0.0..1.0);
                    let angle = std::f64::consts::TAU * (label as f64 / k as f64 + t);
                    let radius = 0.1 + t;
                    x[0] += radius * angle.cos();
                    x[1] += radius * angle.sin();
                }
            }
            Sample::new(x, label)
        })
        .collect();
    samples.shuffle(&mut rng);
    let test = samples.split_off(config.n_train + config.n_val);
    let val = samples.split_off(config.n_train);
    let mut data = Dataset {
        train: samples,
        val,
        test,
        input_dim: d,
        num_classes: k,
    };
    standardize(&mut data);
    Ok(data)
}

fn standardize(data: &mut Dataset) {
    let n = data.train.len() as f64;
    for j in 0..data.input_dim {
        let mean = data.train.iter().map(|s| s.features[j]).sum::<f64>() / n;
        let var = data
            .train
            .iter()
            .map(|s| (s.features[j] - mean).powi(2))
            .sum::<f64>()
            / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for split in [&mut data.train, &mut data.val, &mut data.test] {
            for s in split.iter_mut() {
                s.features[j] = (s.features[j] - mean) / sd;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    /// Comma-separated features with the label in the last column.
    Csv,
    /// `label index:value ...` with 1-based sparse indices.
    Libsvm,
}

impl DataFormat {
    /// Guesses the format from the file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("libsvm" | "svm" | "txt") => DataFormat::Libsvm,
            _ => DataFormat::Csv,
        }
    }
}

/// Samples read from disk with labels remapped to `0..num_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedData {
    pub samples: Vec<Sample>,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Original label of each class index, in first-appearance order.
    pub class_labels: Vec<i64>,
}

/// A parsed row before label remapping.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRow {
    pub features: Vec<f64>,
    pub label: i64,
}

fn parse_label(text: &str) -> std::result::Result<i64, String> {
    let t = text.trim();
    if let Ok(v) = t.parse::<i64>() {
        return Ok(v);
    }
    match t.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9e15 => Ok(v as i64),
        _ => Err(format!("label {t:?} is not an integer")),
    }
}

fn parse_feature(text: &str) -> std::result::Result<f64, String> {
    let t = text.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("feature {t:?} is not finite")),
        Err(_) => Err(format!("feature {t:?} is not a number")),
    }
}

/// Parses one CSV record: features then label.
pub fn parse_csv_fields<'a>(
    fields: impl IntoIterator<Item = &'a str>,
) -> std::result::Result<RawRow, String> {
    let fields: Vec<&str> = fields.into_iter().collect();
    let (label, features) = fields
        .split_last()
        .filter(|(_, f)| !f.is_empty())
        .ok_or_else(|| "expected at least one feature and a label".to_string())?;
    Ok(RawRow {
        features: features
            .iter()
            .map(|f| parse_feature(f))
            .collect::<std::result::Result<_, _>>()?,
        label: parse_label(label)?,
    })
}

/// Parses one LIBSVM line into a dense row of length `max index`.
pub fn parse_libsvm_line(line: &str) -> std::result::Result<RawRow, String> {
    let mut parts = line.split_whitespace();
    let label = parse_label(parts.next().ok_or("empty line")?)?;
    let mut features = Vec::new();
    let mut last = 0;
    for item in parts {
        let (idx, val) = item
            .split_once(':')
            .ok_or_else(|| format!("expected index:value, got {item:?}"))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| format!("index {idx:?} is not a positive integer"))?;
        if idx == 0 {
            return Err("indices are 1-based".into());
        }
        if idx <= last {
            return Err(format!("index {idx} is not increasing"));
        }
        last = idx;
        features.resize(idx, 0.0);
        features[idx - 1] = parse_feature(val)?;
    }
    Ok(RawRow { features, label })
}

/// Reads a dataset file. Blank lines and lines starting with `#` are
/// skipped; every other row must parse or the error names its line.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<LoadedData> {
    let parse_err = |line: u64, message: String| BenchError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows: Vec<(u64, RawRow)> = Vec::new();
    match format {
        DataFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .comment(Some(b'#'))
                .from_path(path)
                .map_err(|e| io_or_csv(path, e))?;
            for record in reader.records() {
                let record = record.map_err(|e| io_or_csv(path, e))?;
                let line = record.position().map_or(0, |p| p.line());
                if record.iter().all(|f| f.trim().is_empty()) {
                    continue;
                }
                let row = parse_csv_fields(record.iter()).map_err(|m| parse_err(line, m))?;
                if let Some((_, first)) = rows.first() {
                    if first.features.len() != row.features.len() {
                        return Err(parse_err(
                            line,
                            format!(
                                "expected {} features, found {}",
                                first.features.len(),
                                row.features.len()
                            ),
                        ));
                    }
                }
                rows.push((line, row));
            }
        }
        DataFormat::Libsvm => {
            let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            for (i, line) in text.lines().enumerate() {
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                let n = i as u64 + 1;
                rows.push((n, parse_libsvm_line(t).map_err(|m| parse_err(n, m))?));
            }
        }
    }
    if rows.is_empty() {
        return Err(BenchError::EmptyFile(path.to_path_buf()));
    }
    let input_dim = rows
        .iter()
        .map(|(_, r)| r.features.len())
        .max()
        .unwrap_or(0);
    if input_dim == 0 {
        return Err(parse_err(rows[0].0, "no features".into()));
    }
    let mut index: HashMap<i64, usize> = HashMap::new();
    let mut class_labels = Vec::new();
    let samples = rows
        .into_iter()
        .map(|(_, mut r)| {
            let next = class_labels.len();
            let label = *index.entry(r.label).or_insert_with(|| {
                class_labels.push(r.label);
                next
            });
            r.features.resize(input_dim, 0.0);
            Sample::new(r.features, label)
        })
        .collect();
    Ok(LoadedData {
        samples,
        input_dim,
        num_classes: class_labels.len(),
        class_labels,
    })
}

fn io_or_csv(path: &Path, e: csv::Error) -> BenchError {
    let line = e.position().map_or(0, |p| p.line());
    if let csv::ErrorKind::Io(_) = e.kind() {
        let csv::ErrorKind::Io(source) = e.into_kind() else {
            unreachable!()
        };
        return BenchError::Io {
            path: path.to_path_buf(),
            source,
        };
    }
    BenchError::Parse {
        path: PathBuf::from(path),
        line,
        message: e.to_string(),
    }
}

/// Disjoint train / validation index sets covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl Split {
    pub fn is_disjoint(&self) -> bool {
        let mut seen = vec![false; self.train.len() + self.val.len()];
        for &i in self.train.iter().chain(&self.val) {
            match seen.get_mut(i) {
                Some(s) if !*s => *s = true,
                _ => return false,
            }
        }
        true
    }
}

/// Seeded split holding out `round(val_fraction * n)` samples, at least
/// one on each side when `n >= 2`.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(BenchError::Config(format!(
            "validation fraction must lie in [0, 1), got {val_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_val = (val_fraction * n as f64).round() as usize;
    if n >= 2 && val_fraction > 0.0 {
        n_val = n_val.clamp(1, n - 1);
    }
    let val = idx.split_off(n - n_val);
    Ok(Split { train: idx, val })
}

/// Splits loaded samples into train and validation sets (no test split).
pub fn split_loaded(data: LoadedData, val_fraction: f64, seed: u64) -> Result<Dataset> {
    let split = split_indices(data.samples.len(), val_fraction, seed)?;
    debug_assert!(split.is_disjoint());
    let pick = |ids: &[usize]| ids.iter().map(|&i| data.samples[i].clone()).collect();
    Ok(Dataset {
        train: pick(&split.train),
        val: pick(&split.val),
        test: Vec::new(),
        input_dim: data.input_dim,
        num_classes: data.num_classes,
    })
}
