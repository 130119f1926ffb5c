//! Datasets: the Gaussian-mixture toy, site partitioning, CSV storage, and
//! IDX image ingestion.

mod gaussian;
mod idx;
mod partition;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use gaussian::{gen_gaussian_mixture, GaussianMixtureSpec};
pub use idx::{load_idx_dataset, parse_idx, read_idx, IdxArray, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use partition::{partition, PartitionMode, PartitionPlan, SitedDataset};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Row-major samples with one integer label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    rows: Tensor,
    labels: Vec<u32>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(rows: Tensor, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        let (n, _) = rows.dims2("LabeledDataset")?;
        if labels.len() != n {
            return Err(Error::shape("LabeledDataset", format!("{n} rows but {} labels", labels.len())));
        }
        if let Some(&y) = labels.iter().find(|&&y| y as usize >= num_classes) {
            return Err(Error::InvalidArgument(format!("label {y} outside {num_classes} classes")));
        }
        Ok(Self { rows, labels, num_classes })
    }

    pub fn empty(dim: usize, num_classes: usize) -> Self {
        Self { rows: Tensor::zeros(&[0, dim]), labels: Vec::new(), num_classes }
    }

    pub fn rows(&self) -> &Tensor {
        &self.rows
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.rows.data()[i * d..(i + 1) * d]
    }

    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes];
        for &y in &self.labels {
            counts[y as usize] += 1;
        }
        counts
    }

    /// Dataset made of the given row indices, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self { rows: Tensor::new(vec![indices.len(), d], data).expect("sized above"), labels, num_classes: self.num_classes }
    }

    /// CSV with header `x0,...,x{d-1},label`. Floats use shortest round-trip
    /// formatting, so reading the file back is lossless.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::new();
        for c in 0..d {
            let _ = write!(out, "x{c},");
        }
        out.push_str("label\n");
        for i in 0..self.len() {
            for v in self.row(i) {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", self.labels[i]);
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output. The class count is taken as
    /// `max(label) + 1` unless `num_classes` is given.
    pub fn from_csv(text: &str, num_classes: Option<usize>) -> Result<Self> {
        let fmt = |line: usize, detail: String| Error::Format { what: "dataset csv".into(), detail: format!("line {line}: {detail}") };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| fmt(1, "missing header".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let d = cols.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| fmt(1, "need at least one feature column".into()))?;
        let expected: Vec<String> = (0..d).map(|c| format!("x{c}")).chain(["label".to_string()]).collect();
        if cols != expected {
            return Err(fmt(1, format!("header {header:?}, expected {}", expected.join(","))));
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d + 1 {
                return Err(fmt(i + 1, format!("{} fields, expected {}", fields.len(), d + 1)));
            }
            for f in &fields[..d] {
                let v: f64 = f.parse().map_err(|_| fmt(i + 1, format!("bad number {f:?}")))?;
                data.push(v);
            }
            labels.push(fields[d].parse::<u32>().map_err(|_| fmt(i + 1, format!("bad label {:?}", fields[d])))?);
        }
        let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(1, |&m| m as usize + 1));
        let n = labels.len();
        Self::new(Tensor::new(vec![n, d], data)?, labels, classes)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path, num_classes: Option<usize>) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?, num_classes)
    }
}
