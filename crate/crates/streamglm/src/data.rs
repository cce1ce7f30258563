//! Real tabular datasets: CSV ingestion, binary label mapping, deterministic
//! train/test splitting, and feature standardization.
//!
//! The pipeline is [`load_csv`] → [`split_standardize`] → training/evaluation.
//! Standardization statistics are fitted on the train split only and applied
//! to both splits, so the test set never leaks into preprocessing. A split,
//! standardized dataset can be round-tripped through a compact binary cache
//! ([`write_cache`] / [`read_cache`]) to skip re-parsing on repeated runs.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::family::Sample;

/// Magic bytes identifying the dataset cache format (version 1).
const CACHE_MAGIC: &[u8; 8] = b"SGLMDS01";

/// Population standard deviations below this are treated as constant
/// features, which standardize to an all-zero column.
const CONST_STD_EPS: f64 = 1e-12;

/// Which column of the delimited file holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    /// Zero-based column index.
    Index(usize),
    /// The last column of each row.
    Last,
}

/// Per-feature standardization statistics fitted on the train split.
///
/// `std` entries are population standard deviations; a stored value of
/// exactly `0.0` marks a feature that was constant on the train split and is
/// mapped to zero everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

/// Seeded train/test partition. `train` keeps the shuffled order in which
/// single-pass training should consume the rows; `test` holds the first
/// rows of the same shuffle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// An in-memory binary-classification dataset.
///
/// Freshly loaded datasets hold raw feature values and no split; after
/// [`split_standardize`] the features are standardized in place and the
/// split indices plus the train-fitted [`Standardization`] are attached.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<f64>,
    stats: Option<Standardization>,
    split: Option<SplitIndices>,
    /// Where the rows came from (echoed into run metadata).
    pub source: String,
}

impl Dataset {
    /// Builds a dataset from an `n × d` feature matrix and `n` labels in
    /// `{0, 1}`. All feature values must be finite.
    pub fn from_parts(features: DMatrix<f64>, labels: Vec<f64>, source: &str) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: features.nrows(), got: labels.len() });
        }
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::Config("dataset must have at least one row and one feature".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Config("dataset labels must lie in {0, 1}".into()));
        }
        Ok(Self { features, labels, stats: None, split: None, source: source.to_string() })
    }

    /// Number of rows.
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    /// Number of features (the label column is not counted).
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// The full feature matrix (standardized once split).
    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    /// All labels, aligned with the feature rows.
    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Train-fitted statistics, present after [`split_standardize`].
    pub fn stats(&self) -> Option<&Standardization> {
        self.stats.as_ref()
    }

    /// Split indices, present after [`split_standardize`].
    pub fn split(&self) -> Option<&SplitIndices> {
        self.split.as_ref()
    }

    /// The row `i` as an owned training sample.
    pub fn sample(&self, i: usize) -> Sample {
        Sample { x: self.features.row(i).transpose(), y: self.labels[i] }
    }

    /// Streams the rows named by `order` as training samples.
    pub fn samples_by_index<'a>(
        &'a self,
        order: &'a [usize],
    ) -> impl Iterator<Item = Result<Sample>> + 'a {
        order.iter().map(move |&i| {
            if i >= self.n() {
                return Err(Error::Config(format!(
                    "sample index {i} out of range for {} rows",
                    self.n()
                )));
            }
            Ok(self.sample(i))
        })
    }

    /// Gathers the rows named by `idx` into a dense matrix (one row per
    /// index), e.g. for batched test-set evaluation.
    pub fn matrix_by_index(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), self.dim(), |r, c| self.features[(idx[r], c)])
    }

    /// Gathers the labels named by `idx`.
    pub fn labels_by_index(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }
}

/// Parses a delimited text file into an unsplit, unstandardized [`Dataset`].
///
/// Every non-label column must be numeric. Rows whose label equals
/// `positive_label` (after trimming) map to `y = 1`, all others to `y = 0` —
/// e.g. Covertype's conventional binarization is class `"2"` against the
/// rest. A header row is detected automatically: if any feature cell of the
/// first row fails to parse as a number, that row is skipped.
///
/// Errors name the offending line for malformed rows (wrong field count,
/// unparseable or non-finite feature); a mapping that yields only one class
/// is rejected, since it almost always means a mistyped `positive_label`.
pub fn load_csv(
    path: &Path,
    label_column: LabelColumn,
    positive_label: &str,
    delimiter: u8,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let mut ncols = 0usize;
    let mut label_idx = 0usize;
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut first = true;

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if first {
            first = false;
            ncols = record.len();
            if ncols < 2 {
                return Err(Error::MalformedRow {
                    line,
                    detail: format!("need at least one feature and a label, got {ncols} column(s)"),
                });
            }
            label_idx = match label_column {
                LabelColumn::Index(i) => i,
                LabelColumn::Last => ncols - 1,
            };
            if label_idx >= ncols {
                return Err(Error::Config(format!(
                    "label column {label_idx} out of range for {ncols} columns"
                )));
            }
            // Header detection: a first row with any non-numeric feature
            // cell is metadata, not data.
            let is_header = record
                .iter()
                .enumerate()
                .any(|(j, cell)| j != label_idx && cell.parse::<f64>().is_err());
            if is_header {
                continue;
            }
        }
        if record.len() != ncols {
            return Err(Error::MalformedRow {
                line,
                detail: format!("expected {ncols} fields, got {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                labels.push(if cell == positive_label { 1.0 } else { 0.0 });
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::MalformedRow {
                line,
                detail: format!("field {j}: cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    line,
                    detail: format!("field {j}: non-finite feature value {cell:?}"),
                });
            }
            rows.push(v);
        }
    }

    let d = ncols - 1;
    let n = labels.len();
    if n == 0 {
        return Err(Error::Config(format!("no data rows in {}", path.display())));
    }
    let positives = labels.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 || positives == n {
        return Err(Error::Config(format!(
            "label mapping produced a single class ({positives} of {n} rows positive); \
             check positive_label {positive_label:?}"
        )));
    }
    let features = DMatrix::from_row_slice(n, d, &rows);
    Dataset::from_parts(features, labels, &path.display().to_string())
}

/// Shuffles the rows with a seeded RNG, carves off the first
/// `round(n · test_fraction)` as the test split, fits per-feature
/// standardization on the remaining train rows, and applies it to both
/// splits in place.
///
/// The train indices keep the shuffled order, which is the order a
/// single-pass trainer should consume them in. Constant train features
/// standardize to zero everywhere (no division by zero). Degenerate splits —
/// an empty train or test side — are errors.
pub fn split_standardize(ds: Dataset, test_fraction: f64, seed: u64) -> Result<Dataset> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    let n = ds.n();
    let d = ds.dim();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::Config(format!(
            "degenerate split: {n} rows at test_fraction {test_fraction} \
             leave {n_test} test rows"
        )));
    }

    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let test: Vec<usize> = idx[..n_test].to_vec();
    let train: Vec<usize> = idx[n_test..].to_vec();

    // Population mean and standard deviation over the train rows only.
    let mut mean = DVector::zeros(d);
    for &i in &train {
        mean += ds.features.row(i).transpose();
    }
    mean /= train.len() as f64;
    let mut var = DVector::zeros(d);
    for &i in &train {
        let centered = ds.features.row(i).transpose() - &mean;
        var += centered.component_mul(&centered);
    }
    var /= train.len() as f64;
    let std = var.map(|v| {
        let s = v.sqrt();
        if s < CONST_STD_EPS {
            0.0
        } else {
            s
        }
    });

    let mut features = ds.features;
    for j in 0..d {
        let (m, s) = (mean[j], std[j]);
        for r in 0..n {
            features[(r, j)] = if s > 0.0 { (features[(r, j)] - m) / s } else { 0.0 };
        }
    }

    Ok(Dataset {
        features,
        labels: ds.labels,
        stats: Some(Standardization { mean, std }),
        split: Some(SplitIndices { train, test }),
        source: ds.source,
    })
}

/// Writes the dataset back out as delimited text, features first and the
/// label (`0`/`1`) in the last column, no header. Values are printed in
/// shortest round-trip form, so reloading with [`load_csv`] reproduces the
/// stored floats bit for bit.
pub fn write_csv(ds: &Dataset, path: &Path, delimiter: u8) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .from_path(path)?;
    for i in 0..ds.n() {
        let mut record: Vec<String> = ds.features.row(i).iter().map(|v| v.to_string()).collect();
        record.push(if ds.labels[i] == 1.0 { "1".into() } else { "0".into() });
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Serializes a split, standardized dataset into a binary cache so repeated
/// experiments skip CSV parsing and re-standardization.
///
/// Layout (all integers and floats little-endian):
/// magic `"SGLMDS01"`, `n: u64`, `d: u64`, mean (`d × f64`), std (`d × f64`),
/// train length + indices (`u64` each), test length + indices, features
/// (`n·d × f64`, row-major), labels (`n × u8`), and the UTF-8 source string
/// prefixed by its byte length. The file is written atomically via a sibling
/// temp file.
pub fn write_cache(ds: &Dataset, path: &Path) -> Result<()> {
    let stats = ds
        .stats
        .as_ref()
        .ok_or_else(|| Error::Config("cache stores split, standardized datasets only".into()))?;
    let split = ds
        .split
        .as_ref()
        .ok_or_else(|| Error::Config("cache stores split, standardized datasets only".into()))?;

    let tmp = path.with_extension("cache.tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(CACHE_MAGIC)?;
        write_u64(&mut w, ds.n() as u64)?;
        write_u64(&mut w, ds.dim() as u64)?;
        for v in stats.mean.iter().chain(stats.std.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        for idx in [&split.train, &split.test] {
            write_u64(&mut w, idx.len() as u64)?;
            for &i in idx {
                write_u64(&mut w, i as u64)?;
            }
        }
        for r in 0..ds.n() {
            for c in 0..ds.dim() {
                w.write_all(&ds.features[(r, c)].to_le_bytes())?;
            }
        }
        let label_bytes: Vec<u8> =
            ds.labels.iter().map(|&y| if y == 1.0 { 1u8 } else { 0u8 }).collect();
        w.write_all(&label_bytes)?;
        write_u64(&mut w, ds.source.len() as u64)?;
        w.write_all(ds.source.as_bytes())?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a dataset cache written by [`write_cache`], reproducing the
/// original dataset bit for bit.
pub fn read_cache(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Config(format!("{} is not a dataset cache", path.display())));
    }
    let n = read_u64(&mut r)? as usize;
    let d = read_u64(&mut r)? as usize;
    let mut mean = DVector::zeros(d);
    for j in 0..d {
        mean[j] = read_f64(&mut r)?;
    }
    let mut std = DVector::zeros(d);
    for j in 0..d {
        std[j] = read_f64(&mut r)?;
    }
    let read_indices = |r: &mut BufReader<fs::File>| -> Result<Vec<usize>> {
        let len = read_u64(r)? as usize;
        let mut idx = Vec::with_capacity(len);
        for _ in 0..len {
            let i = read_u64(r)? as usize;
            if i >= n {
                return Err(Error::Config(format!("cache split index {i} out of range")));
            }
            idx.push(i);
        }
        Ok(idx)
    };
    let train = read_indices(&mut r)?;
    let test = read_indices(&mut r)?;
    let mut features = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            features[(i, j)] = read_f64(&mut r)?;
        }
    }
    let mut label_bytes = vec![0u8; n];
    r.read_exact(&mut label_bytes)?;
    let labels: Vec<f64> = label_bytes.iter().map(|&b| f64::from(b)).collect();
    let source_len = read_u64(&mut r)? as usize;
    let mut source_bytes = vec![0u8; source_len];
    r.read_exact(&mut source_bytes)?;
    let source = String::from_utf8(source_bytes)
        .map_err(|_| Error::Config("cache source string is not UTF-8".into()))?;

    if train.len() + test.len() != n {
        return Err(Error::Config("cache split does not cover all rows".into()));
    }
    let mut ds = Dataset::from_parts(features, labels, &source)?;
    ds.stats = Some(Standardization { mean, std });
    ds.split = Some(SplitIndices { train, test });
    Ok(ds)
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_fixture(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        fs::write(&path, contents).unwrap();
        path
    }

    fn toy_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let features = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let labels: Vec<f64> = (0..n).map(|i| f64::from(i % 2 == 0)).collect();
        Dataset::from_parts(features, labels, "toy").unwrap()
    }

    // A three-row file with the label in the last column parses to n = 3
    // with labels mapped into {0, 1}.
    #[test]
    fn toy_csv_parses_with_binary_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path =
            write_fixture(dir.path(), "toy.csv", "1,0,pos\n0.5,-2,neg\n-1,3.25,pos\n");
        let ds = load_csv(&path, LabelColumn::Last, "pos", b',').unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels(), &[1.0, 0.0, 1.0]);
        assert_eq!(ds.features()[(1, 1)], -2.0);
        assert!(ds.split().is_none());
    }

    #[test]
    fn header_rows_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(
            dir.path(),
            "headed.csv",
            "f1,f2,label\n1,0,pos\n0.5,-2,neg\n-1,3.25,pos\n",
        );
        let ds = load_csv(&path, LabelColumn::Last, "pos", b',').unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.labels(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn label_column_index_and_delimiter_are_configurable() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), "semi.csv", "pos;1;0\nneg;0.5;-2\n");
        let ds = load_csv(&path, LabelColumn::Index(0), "pos", b';').unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels(), &[1.0, 0.0]);
        assert_eq!(ds.features()[(1, 0)], 0.5);
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let bad_field =
            write_fixture(dir.path(), "bad_field.csv", "1,0,pos\n1,abc,neg\n2,3,pos\n");
        match load_csv(&bad_field, LabelColumn::Last, "pos", b',') {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedRow, got {other:?}"),
        }

        let bad_count = write_fixture(dir.path(), "bad_count.csv", "1,0,pos\n1,neg\n");
        match load_csv(&bad_count, LabelColumn::Last, "pos", b',') {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedRow, got {other:?}"),
        }

        let non_finite = write_fixture(dir.path(), "inf.csv", "1,inf,pos\n1,2,neg\n");
        assert!(matches!(
            load_csv(&non_finite, LabelColumn::Last, "pos", b','),
            Err(Error::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn single_class_mapping_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), "oneclass.csv", "1,0,pos\n2,1,pos\n");
        assert!(matches!(
            load_csv(&path, LabelColumn::Last, "pos", b','),
            Err(Error::Config(_))
        ));
        // The same file is fine when the "rest" class is genuinely present.
        let ok = write_fixture(dir.path(), "twoclass.csv", "1,0,pos\n2,1,other\n");
        assert!(load_csv(&ok, LabelColumn::Last, "pos", b',').is_ok());
    }

    // n = 10 at test_fraction 0.2 splits 8 train / 2 test; degenerate
    // fractions are errors.
    #[test]
    fn split_sizes_and_degenerate_splits() {
        let ds = toy_dataset(10, 3, 1);
        let split = split_standardize(ds.clone(), 0.2, 42).unwrap();
        let idx = split.split().unwrap();
        assert_eq!(idx.train.len(), 8);
        assert_eq!(idx.test.len(), 2);
        // Together the splits cover every row exactly once.
        let mut all: Vec<usize> = idx.train.iter().chain(idx.test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        assert!(split_standardize(toy_dataset(2, 2, 1), 0.9, 0).is_err());
        assert!(split_standardize(toy_dataset(4, 2, 1), 0.05, 0).is_err());
        assert!(split_standardize(ds, 1.0, 0).is_err());
    }

    #[test]
    fn same_seed_gives_identical_splits() {
        let ds = toy_dataset(50, 4, 9);
        let a = split_standardize(ds.clone(), 0.2, 7).unwrap();
        let b = split_standardize(ds, 0.2, 7).unwrap();
        assert_eq!(a.split(), b.split());
        assert_eq!(a.features(), b.features());
        // The train order is genuinely shuffled, not ascending.
        let mut sorted = a.split().unwrap().train.clone();
        sorted.sort_unstable();
        assert_ne!(a.split().unwrap().train, sorted);
    }

    #[test]
    fn train_split_is_standardized_and_constant_columns_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        let features = DMatrix::from_fn(200, 4, |_, c| {
            if c == 2 {
                5.0 // constant column
            } else {
                rng.random::<f64>() * 10.0 - 3.0
            }
        });
        let labels: Vec<f64> = (0..200).map(|i| f64::from(i % 3 == 0)).collect();
        let ds = Dataset::from_parts(features, labels, "toy").unwrap();
        let split = split_standardize(ds, 0.25, 11).unwrap();
        let idx = split.split().unwrap();

        for j in 0..4 {
            let col: Vec<f64> = idx.train.iter().map(|&i| split.features()[(i, j)]).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() <= 1e-8, "column {j} train mean {mean}");
            if j == 2 {
                assert!(col.iter().all(|&v| v == 0.0));
                assert_eq!(split.stats().unwrap().std[j], 0.0);
            } else {
                assert!((var.sqrt() - 1.0).abs() <= 1e-6, "column {j} train std {}", var.sqrt());
            }
        }
        // The constant column is zero on the test side too.
        assert!(idx.test.iter().all(|&i| split.features()[(i, 2)] == 0.0));
    }

    #[test]
    fn test_rows_use_train_statistics() {
        let ds = toy_dataset(40, 3, 5);
        let raw = ds.features().clone();
        let split = split_standardize(ds, 0.25, 2).unwrap();
        let stats = split.stats().unwrap();
        let &i = &split.split().unwrap().test[0];
        for j in 0..3 {
            let expect = (raw[(i, j)] - stats.mean[j]) / stats.std[j];
            assert_eq!(split.features()[(i, j)], expect);
        }
    }

    // Mutating a row that lands in the test split must not move the fitted
    // statistics at all.
    #[test]
    fn no_test_set_leakage() {
        let raw = toy_dataset(30, 3, 13);
        let baseline = split_standardize(raw.clone(), 0.3, 99).unwrap();
        let victim = baseline.split().unwrap().test[1];

        let mut mutated = raw.clone();
        mutated.features[(victim, 0)] += 1000.0;
        mutated.features[(victim, 2)] -= 77.0;
        let resplit = split_standardize(mutated, 0.3, 99).unwrap();

        assert_eq!(baseline.stats(), resplit.stats());
        // ... while mutating a train row does move them.
        let train_victim = baseline.split().unwrap().train[0];
        let mut mutated = raw;
        mutated.features[(train_victim, 0)] += 1000.0;
        let resplit = split_standardize(mutated, 0.3, 99).unwrap();
        assert_ne!(baseline.stats(), resplit.stats());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let features = DMatrix::from_row_slice(
            4,
            3,
            &[
                0.1,
                -0.0,
                1.0 / 3.0,
                std::f64::consts::PI,
                1e-308,
                -3.25,
                5e300,
                f64::MIN_POSITIVE,
                -1e-9,
                2.0,
                4.0,
                8.0,
            ],
        );
        let labels = vec![1.0, 0.0, 0.0, 1.0];
        let ds = Dataset::from_parts(features, labels, "trip").unwrap();
        let path = dir.path().join("trip.csv");
        write_csv(&ds, &path, b',').unwrap();
        let back = load_csv(&path, LabelColumn::Last, "1", b',').unwrap();
        assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.features().iter().zip(ds.features().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let split = split_standardize(toy_dataset(25, 4, 21), 0.2, 17).unwrap();
        let path = dir.path().join("ds.cache");
        write_cache(&split, &path).unwrap();
        let back = read_cache(&path).unwrap();

        assert_eq!(back.n(), split.n());
        assert_eq!(back.dim(), split.dim());
        assert_eq!(back.labels(), split.labels());
        assert_eq!(back.split(), split.split());
        assert_eq!(back.source, split.source);
        for (a, b) in back.features().iter().zip(split.features().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let (sa, sb) = (back.stats().unwrap(), split.stats().unwrap());
        for (a, b) in sa.mean.iter().zip(sb.mean.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in sa.std.iter().zip(sb.std.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn cache_rejects_unsplit_datasets_and_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let raw = toy_dataset(10, 2, 1);
        assert!(matches!(
            write_cache(&raw, &dir.path().join("raw.cache")),
            Err(Error::Config(_))
        ));

        let junk = dir.path().join("junk.cache");
        fs::write(&junk, b"definitely not a cache").unwrap();
        assert!(read_cache(&junk).is_err());
    }

    #[test]
    fn samples_follow_requested_order() {
        let ds = toy_dataset(6, 2, 2);
        let order = [4usize, 0, 5];
        let samples: Vec<Sample> =
            ds.samples_by_index(&order).collect::<Result<_>>().unwrap();
        for (s, &i) in samples.iter().zip(order.iter()) {
            assert_eq!(s.y, ds.labels()[i]);
            assert_eq!(s.x, ds.features().row(i).transpose());
        }
        assert!(ds.samples_by_index(&[99]).next().unwrap().is_err());

        let m = ds.matrix_by_index(&order);
        assert_eq!(m.nrows(), 3);
        assert_eq!(m.row(1), ds.features().row(0));
        assert_eq!(ds.labels_by_index(&order), vec![ds.labels()[4], ds.labels()[0], ds.labels()[5]]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        // Finite decimal features survive a CSV write/reload unchanged.
        #[test]
        fn csv_round_trip_random(
            n in 2usize..12,
            d in 1usize..5,
            seed in 0u64..1_000,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let ds = toy_dataset(n, d, seed);
            let path = dir.path().join("rt.csv");
            write_csv(&ds, &path, b',').unwrap();
            let back = load_csv(&path, LabelColumn::Last, "1", b',').unwrap();
            prop_assert_eq!(back.labels(), ds.labels());
            for (a, b) in back.features().iter().zip(ds.features().iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
