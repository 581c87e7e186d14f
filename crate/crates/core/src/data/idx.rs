//! IDX binary files: big-endian `u32` magic (`0x00000803` for rank-3 `u8`
//! images, `0x00000801` for rank-1 `u8` labels), big-endian `u32` dimension
//! sizes, then the raw bytes.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::nn::Tensor;

use super::{Dataset, Labels};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated file: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("empty IDX file")]
    Empty,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(IdxError::Truncated { needed: offset + 4, available: bytes.len() })
}

fn payload(bytes: &[u8], header: usize, count: usize) -> Result<&[u8], IdxError> {
    let needed = header + count;
    if bytes.len() < needed {
        return Err(IdxError::Truncated { needed, available: bytes.len() });
    }
    Ok(&bytes[header..needed])
}

/// Images as `(count, rows, cols, pixels)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8]), IdxError> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(IdxError::BadMagic { expected: IMAGES_MAGIC, found: magic });
    }
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    Ok((n, rows, cols, payload(bytes, 16, n * rows * cols)?))
}

pub fn parse_labels(bytes: &[u8]) -> Result<&[u8], IdxError> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::BadMagic { expected: LABELS_MAGIC, found: magic });
    }
    let n = read_u32(bytes, 4)? as usize;
    payload(bytes, 8, n)
}

/// Dataset from in-memory IDX images and labels; pixels scaled to `[0, 1]`.
pub fn dataset_from_idx(images: &[u8], labels: &[u8], limit: Option<usize>) -> Result<Dataset, IdxError> {
    let (n, rows, cols, pixels) = parse_images(images)?;
    let lab = parse_labels(labels)?;
    if n != lab.len() {
        return Err(IdxError::CountMismatch { images: n, labels: lab.len() });
    }
    let keep = limit.map_or(n, |l| l.min(n));
    let d = rows * cols;
    if keep == 0 || d == 0 {
        return Err(IdxError::Empty);
    }
    let values = pixels[..keep * d].iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = lab[..keep].iter().map(|&y| usize::from(y)).collect();
    let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let features = Tensor::matrix(keep, d, values).expect("sizes checked above");
    Ok(Dataset::new(features, Labels::Classes { labels, num_classes }).expect("labels bounded by construction"))
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, IdxError> {
    load_idx_limited(images_path, labels_path, None)
}

/// Like [`load_idx`], keeping only the first `limit` samples.
pub fn load_idx_limited(images_path: &Path, labels_path: &Path, limit: Option<usize>) -> Result<Dataset, IdxError> {
    let read = |p: &Path| fs::read(p).map_err(|source| IdxError::Io { path: p.display().to_string(), source });
    let images = read(images_path)?;
    let labels = read(labels_path)?;
    dataset_from_idx(&images, &labels, limit)
}

/// Encodes images and labels as IDX bytes.
pub fn encode_idx(rows: usize, cols: usize, images: &[Vec<u8>], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + images.len() * rows * cols);
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    for im in images {
        img.extend_from_slice(im);
    }
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}
