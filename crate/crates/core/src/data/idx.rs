//! IDX (big-endian) label and image files.

use std::fs;
use std::path::Path;

use super::LabeledDataset;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, Clone, PartialEq)]
pub enum IdxArray {
    Labels(Vec<u8>),
    /// `count × (rows·cols)` pixels scaled from `0..=255` to `[-1, 1]`.
    Images { rows: usize, cols: usize, pixels: Tensor },
}

impl IdxArray {
    pub fn count(&self) -> usize {
        match self {
            IdxArray::Labels(l) => l.len(),
            IdxArray::Images { pixels, .. } => pixels.shape()[0],
        }
    }
}

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format { what: "idx".into(), detail: detail.into() }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| format_err(format!("truncated header at byte {at}")))
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    let magic = be_u32(bytes, 0)?;
    let (dims, header) = match magic {
        IDX_LABELS_MAGIC => (1, 8),
        IDX_IMAGES_MAGIC => (3, 16),
        other => return Err(format_err(format!("bad magic {other:#010x}"))),
    };
    let shape: Vec<usize> = (0..dims).map(|i| be_u32(bytes, 4 + 4 * i).map(|v| v as usize)).collect::<Result<_>>()?;
    let expected = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| format_err("dimension overflow"))?;
    let body = &bytes[header..];
    if body.len() != expected {
        return Err(format_err(format!("expected {expected} data bytes, found {}", body.len())));
    }
    Ok(match magic {
        IDX_LABELS_MAGIC => IdxArray::Labels(body.to_vec()),
        _ => {
            let (n, rows, cols) = (shape[0], shape[1], shape[2]);
            if rows == 0 || cols == 0 {
                return Err(format_err("zero image dimension"));
            }
            let data = body.iter().map(|&b| f64::from(b) / 127.5 - 1.0).collect();
            IdxArray::Images { rows, cols, pixels: Tensor::new(vec![n, rows * cols], data)? }
        }
    })
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    parse_idx(&fs::read(path)?)
}

/// Pairs an image file with its label file.
pub fn load_idx_dataset(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let IdxArray::Images { pixels, .. } = read_idx(images)? else {
        return Err(format_err(format!("{} is not an image file", images.display())));
    };
    let IdxArray::Labels(labels) = read_idx(labels)? else {
        return Err(format_err(format!("{} is not a label file", labels.display())));
    };
    if labels.len() != pixels.shape()[0] {
        return Err(format_err(format!("{} labels for {} images", labels.len(), pixels.shape()[0])));
    }
    let labels: Vec<u32> = labels.into_iter().map(u32::from).collect();
    let classes = labels.iter().max().map_or(1, |&m| m as usize + 1);
    LabeledDataset::new(pixels, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_bad_magic() {
        assert!(parse_idx(&[]).is_err());
        assert!(parse_idx(&[0, 0, 8, 2, 0, 0, 0, 0]).is_err());
        assert_eq!(parse_idx(&[0, 0, 8, 1, 0, 0, 0, 0]).unwrap().count(), 0);
    }

    #[test]
    fn labels_and_truncation() {
        let mut bytes = vec![0, 0, 8, 1, 0, 0, 0, 3, 7, 8, 9];
        assert_eq!(parse_idx(&bytes).unwrap(), IdxArray::Labels(vec![7, 8, 9]));
        bytes.pop();
        assert!(parse_idx(&bytes).is_err());
    }
}
