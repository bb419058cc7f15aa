//! Desk-scale classification datasets.
//!
//! Two synthetic generators (two moons, Gaussian blobs), a CSV loader, a
//! seeded train/test split, and a shuffling batch iterator. Every feature a
//! [`Dataset`] exposes lies in `[0, 1]`, which is the box the attack
//! projections assume; the affine used to get there is recorded per column
//! in [`ColumnNorm`] so raw coordinates can always be reconstructed.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::Streams;

/// Affine normalization applied to one raw column: `[raw_min, raw_max]`
/// maps onto `[lo, hi]`. A constant raw column maps to 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnNorm {
    pub raw_min: f64,
    pub raw_max: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ColumnNorm {
    fn identity() -> Self {
        ColumnNorm { raw_min: 0.0, raw_max: 1.0, lo: 0.0, hi: 1.0 }
    }

    fn apply(&self, v: f64) -> f64 {
        if self.raw_max > self.raw_min {
            self.lo + (self.hi - self.lo) * (v - self.raw_min) / (self.raw_max - self.raw_min)
        } else {
            0.0
        }
    }

    /// Inverse of [`ColumnNorm::apply`] for non-constant columns.
    pub fn invert(&self, normalized: f64) -> f64 {
        if self.raw_max > self.raw_min {
            self.raw_min + (normalized - self.lo) * (self.raw_max - self.raw_min) / (self.hi - self.lo)
        } else {
            self.raw_min
        }
    }
}

/// Labeled classification data with all features in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `[n, d]` feature matrix.
    pub features: Tensor,
    /// One label per row, each in `[0, classes)`.
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Per-column normalization that produced `features`.
    pub norms: Vec<ColumnNorm>,
    /// Column names, used when writing CSV.
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Checks the structural invariants: features finite and inside `[0, 1]`,
    /// labels in range, every class populated.
    pub fn validate(&self) -> Result<()> {
        let [n, d] = self.features.dims2()?;
        if n != self.labels.len() {
            return Err(Error::invalid("feature rows and labels disagree"));
        }
        if self.norms.len() != d || self.feature_names.len() != d {
            return Err(Error::invalid("column metadata does not match feature width"));
        }
        for (i, &v) in self.features.data().iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("feature value {v} at flat index {i} outside [0, 1]")));
            }
        }
        for count in self.class_counts() {
            if count == 0 {
                return Err(Error::invalid("a class has no samples"));
            }
        }
        if self.labels.iter().any(|&y| y >= self.classes) {
            return Err(Error::invalid("label out of class range"));
        }
        Ok(())
    }

    /// Rows `indices` as a feature matrix and label vector.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.features.data()[i * d..(i + 1) * d]);
            labels.push(self.labels[i]);
        }
        let features = Tensor::from_vec(vec![indices.len(), d], data).expect("gather shape");
        (features, labels)
    }

    /// Seeded random split into `(train, test)`.
    ///
    /// `test_fraction` must leave both parts non-empty. The split is a plain
    /// permutation; at very small `n` a class can end up on one side only.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
            return Err(Error::invalid(format!("test_fraction {test_fraction} not in (0, 1)")));
        }
        let n = self.len();
        let test_n = ((n as f64) * test_fraction).round() as usize;
        if test_n == 0 || test_n >= n {
            return Err(Error::invalid(format!(
                "test_fraction {test_fraction} leaves an empty part for {n} samples"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut Streams::new(seed).rng("dataset_split", 0, 0));
        let make = |indices: &[usize]| -> Dataset {
            let (features, labels) = self.gather(indices);
            Dataset {
                features,
                labels,
                classes: self.classes,
                norms: self.norms.clone(),
                feature_names: self.feature_names.clone(),
            }
        };
        Ok((make(&order[test_n..]), make(&order[..test_n])))
    }
}

fn minmax_rescale(raw: &mut [f64], n: usize, d: usize, lo: f64, hi: f64) -> Vec<ColumnNorm> {
    let mut norms = Vec::with_capacity(d);
    for j in 0..d {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for i in 0..n {
            min = min.min(raw[i * d + j]);
            max = max.max(raw[i * d + j]);
        }
        let norm = ColumnNorm { raw_min: min, raw_max: max, lo, hi };
        for i in 0..n {
            raw[i * d + j] = norm.apply(raw[i * d + j]);
        }
        norms.push(norm);
    }
    norms
}

fn default_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// Two interleaved half-circles, one per class, with Gaussian coordinate
/// noise, rescaled per axis into `[0.1, 0.9]`.
///
/// With `noise = 0` every point lies exactly on its canonical arc: class 0
/// on the unit circle `(cos t, sin t)`, class 1 on `(1 - cos t, 0.5 - sin t)`,
/// with `t` on a uniform grid over `[0, pi]`.
pub fn make_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::invalid(format!("two moons needs n >= 2, got {n}")));
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(Error::invalid(format!("noise must be finite and >= 0, got {noise}")));
    }
    let n_outer = n - n / 2;
    let n_inner = n / 2;
    let arc = |m: usize, i: usize| -> f64 {
        if m < 2 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (m - 1) as f64
        }
    };

    let mut raw = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n_outer {
        let t = arc(n_outer, i);
        raw.extend_from_slice(&[t.cos(), t.sin()]);
        labels.push(0);
    }
    for i in 0..n_inner {
        let t = arc(n_inner, i);
        raw.extend_from_slice(&[1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    if noise > 0.0 {
        let gauss = Normal::new(0.0, noise).expect("validated noise");
        let mut rng = Streams::new(seed).rng("two_moons_noise", 0, 0);
        for v in &mut raw {
            *v += gauss.sample(&mut rng);
        }
    }

    let norms = minmax_rescale(&mut raw, n, 2, 0.1, 0.9);
    let dataset = Dataset {
        features: Tensor::from_vec(vec![n, 2], raw)?,
        labels,
        classes: 2,
        norms,
        feature_names: default_names(2),
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Cluster centers used by [`make_gaussian_blobs`]: `classes` i.i.d. draws
/// from `N(0, separation^2 I_dim)`, in class order.
pub fn blob_centers(classes: usize, dim: usize, separation: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = Streams::new(seed).rng("blob_centers", 0, 0);
    (0..classes)
        .map(|_| (0..dim).map(|_| separation * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// `classes` isotropic unit-variance Gaussian clusters in `dim` dimensions,
/// rescaled per axis into `[0, 1]`. Larger `separation` spreads the centers.
pub fn make_gaussian_blobs(n: usize, classes: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 || dim == 0 {
        return Err(Error::invalid("blobs need classes >= 2 and dim >= 1"));
    }
    if n < classes {
        return Err(Error::invalid(format!("blobs need n >= classes, got n={n}, classes={classes}")));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::invalid(format!("separation must be finite and >= 0, got {separation}")));
    }
    let centers = blob_centers(classes, dim, separation, seed);

    let mut raw = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    let mut rng = Streams::new(seed).rng("blob_points", 0, 0);
    for c in 0..classes {
        // Remainder goes to the leading classes, keeping counts within one.
        let count = n / classes + usize::from(c < n % classes);
        for _ in 0..count {
            for &center_j in &centers[c] {
                raw.push(center_j + rng.sample::<f64, _>(StandardNormal));
            }
            labels.push(c);
        }
    }

    let norms = minmax_rescale(&mut raw, n, dim, 0.0, 1.0);
    let dataset = Dataset {
        features: Tensor::from_vec(vec![n, dim], raw)?,
        labels,
        classes,
        norms,
        feature_names: default_names(dim),
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Loads a comma-separated file: first line names the columns, every other
/// line is one sample. `label_col` names the integer class column; all other
/// columns are `f64` features.
///
/// Feature columns are min-max normalized into `[0, 1]`, except columns that
/// already lie inside `[0, 1]`, which are kept untouched so that writing a
/// normalized dataset and loading it back is the identity. The applied
/// affine is recorded per column either way. Labels must be non-negative
/// integers and every class below the maximum must occur at least once.
pub fn load_csv(path: &std::path::Path, label_col: &str) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let path_str = path.display().to_string();
    let fail = |row: usize, col: usize, msg: String| Error::Csv { path: path_str.clone(), row, col, msg };

    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| fail(1, 1, "empty file".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_idx = columns
        .iter()
        .position(|&c| c == label_col)
        .ok_or_else(|| fail(1, 1, format!("label column {label_col:?} not in header")))?;
    let d = columns.len() - 1;
    if d == 0 {
        return Err(fail(1, 1, "no feature columns".into()));
    }

    let mut raw = Vec::new();
    let mut labels = Vec::new();
    for (line_idx, line) in lines {
        let row = line_idx + 1; // 1-based, counting the header
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(fail(row, 1, format!("expected {} cells, got {}", columns.len(), cells.len())));
        }
        for (j, cell) in cells.iter().enumerate() {
            let col = j + 1;
            let value: f64 = cell
                .parse()
                .map_err(|_| fail(row, col, format!("cannot parse {cell:?} as a number")))?;
            if !value.is_finite() {
                return Err(fail(row, col, format!("non-finite value {cell:?}")));
            }
            if j == label_idx {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(fail(row, col, format!("label {cell:?} is not a non-negative integer")));
                }
                labels.push(value as usize);
            } else {
                raw.push(value);
            }
        }
    }
    let n = labels.len();
    if n == 0 {
        return Err(fail(2, 1, "no data rows".into()));
    }

    let mut norms = Vec::with_capacity(d);
    for j in 0..d {
        let column: Vec<f64> = (0..n).map(|i| raw[i * d + j]).collect();
        let min = column.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm = if min >= 0.0 && max <= 1.0 {
            ColumnNorm::identity()
        } else {
            ColumnNorm { raw_min: min, raw_max: max, lo: 0.0, hi: 1.0 }
        };
        if norm != ColumnNorm::identity() {
            for i in 0..n {
                raw[i * d + j] = norm.apply(raw[i * d + j]);
            }
        }
        norms.push(norm);
    }

    let classes = labels.iter().copied().max().expect("non-empty") + 1;
    let feature_names: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, name)| name.to_string())
        .collect();
    let dataset = Dataset {
        features: Tensor::from_vec(vec![n, d], raw)?,
        labels,
        classes,
        norms,
        feature_names,
    };
    dataset.validate().map_err(|e| fail(1, 1, e.to_string()))?;
    Ok(dataset)
}

/// Writes `dataset` in the dialect [`load_csv`] reads: feature columns under
/// their recorded names plus a final `label` column. Values are printed with
/// the shortest representation that parses back to the same `f64`.
pub fn write_csv(dataset: &Dataset, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{},label", dataset.feature_names.join(","))?;
    let d = dataset.dim();
    for (i, &label) in dataset.labels.iter().enumerate() {
        for j in 0..d {
            write!(out, "{},", dataset.features.data()[i * d + j])?;
        }
        writeln!(out, "{label}")?;
    }
    out.flush()?;
    Ok(())
}

/// Yields one epoch of minibatches at a time, reshuffling between epochs.
/// The final short batch is kept, so each epoch partitions the dataset.
pub struct BatchIterator<'a> {
    dataset: &'a Dataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
}

/// One minibatch; `indices` are positions into the originating dataset.
pub struct Batch {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

impl<'a> BatchIterator<'a> {
    pub fn new(dataset: &'a Dataset, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if dataset.is_empty() {
            return Err(Error::invalid("cannot iterate an empty dataset"));
        }
        Ok(BatchIterator { dataset, batch_size, seed, epoch: 0 })
    }

    /// Number of epochs already produced.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.dataset.len().div_ceil(self.batch_size)
    }

    /// Shuffles with the stream `(seed, epoch)` and returns the epoch's
    /// batches in order.
    pub fn next_epoch(&mut self) -> Vec<Batch> {
        let mut order: Vec<usize> = (0..self.dataset.len()).collect();
        order.shuffle(&mut Streams::new(self.seed).rng("batch_shuffle", self.epoch, 0));
        self.epoch += 1;
        order
            .chunks(self.batch_size)
            .map(|indices| {
                let (features, labels) = self.dataset.gather(indices);
                Batch { features, labels, indices: indices.to_vec() }
            })
            .collect()
    }
}
