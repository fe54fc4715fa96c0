//! MNIST-format IDX loading, [0,1] input scaling, one-hot targets,
//! synthetic blob datasets for tests, and train/validation splitting.

use crate::error::{Error, Result};
use crate::num::Rng;
use crate::Matrix;
use std::io::Read;
use std::path::Path;

const IDX3_MAGIC: u32 = 0x0000_0803;
const IDX1_MAGIC: u32 = 0x0000_0801;

/// Labeled dataset with inputs scaled into `[0,1]^d`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Dataset> {
        if inputs.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} input rows vs {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::InvalidLabel {
                row,
                label,
                classes: num_classes,
            });
        }
        Ok(Dataset {
            inputs,
            labels,
            num_classes,
        })
    }

    /// Load an (images, labels) IDX pair into one dataset.
    pub fn from_idx(
        images: impl AsRef<Path>,
        labels: impl AsRef<Path>,
        num_classes: usize,
    ) -> Result<Dataset> {
        let inputs = load_idx_images(images)?;
        let labels = load_idx_labels(labels)?;
        Dataset::new(inputs, labels, num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// One-hot target row for example `i`.
    pub fn target(&self, i: usize) -> Vec<f64> {
        let mut t = vec![0.0; self.num_classes];
        t[self.labels[i]] = 1.0;
        t
    }

    /// First `n` rows and the remainder, order preserved.
    pub fn split(&self, n_train: usize) -> Result<(Dataset, Dataset)> {
        if n_train > self.len() {
            return Err(Error::InvalidParameter(format!(
                "split at {n_train} but dataset has {} rows",
                self.len()
            )));
        }
        let take = |range: std::ops::Range<usize>| -> Dataset {
            let mut data = Vec::with_capacity(range.len() * self.dim());
            for r in range.clone() {
                data.extend_from_slice(self.inputs.row(r));
            }
            Dataset {
                inputs: Matrix::from_vec(range.len(), self.dim(), data).unwrap(),
                labels: self.labels[range].to_vec(),
                num_classes: self.num_classes,
            }
        };
        Ok((take(0..n_train), take(n_train..self.len())))
    }

    /// Copy of the first `n` rows (or all, if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        self.split(n.min(self.len())).unwrap().0
    }
}

fn read_maybe_gzip(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let raw = std::fs::read(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|source| Error::File {
                path: path.display().to_string(),
                source,
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Parse IDX3 image bytes into an `N x (rows*cols)` matrix, each byte
/// mapped to `b/255`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Matrix> {
    let name = path.as_ref().display().to_string();
    let bytes = read_maybe_gzip(&path)?;
    if bytes.len() < 16 {
        return Err(Error::Truncated {
            path: name,
            expected: 16,
            found: bytes.len(),
        });
    }
    let magic = be_u32(&bytes, 0);
    if magic != IDX3_MAGIC {
        return Err(Error::BadMagic {
            path: name,
            expected: IDX3_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(&bytes, 4) as usize;
    let rows = be_u32(&bytes, 8) as usize;
    let cols = be_u32(&bytes, 12) as usize;
    let expected = 16 + n * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: name,
            expected,
            found: bytes.len(),
        });
    }
    let data = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Matrix::from_vec(n, rows * cols, data)
}

/// Parse IDX1 label bytes into class indices.
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let name = path.as_ref().display().to_string();
    let bytes = read_maybe_gzip(&path)?;
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            path: name,
            expected: 8,
            found: bytes.len(),
        });
    }
    let magic = be_u32(&bytes, 0);
    if magic != IDX1_MAGIC {
        return Err(Error::BadMagic {
            path: name,
            expected: IDX1_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(&bytes, 4) as usize;
    let expected = 8 + n;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: name,
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

/// Encode images (values in [0,1], one image per row reshaped to
/// `img_rows x img_cols`) as IDX3 bytes with the inverse `round(v*255)`
/// mapping.
pub fn idx3_encode(images: &Matrix, img_rows: usize, img_cols: usize) -> Result<Vec<u8>> {
    if images.cols() != img_rows * img_cols {
        return Err(Error::Shape(format!(
            "{} columns cannot reshape to {img_rows}x{img_cols}",
            images.cols()
        )));
    }
    let mut out = Vec::with_capacity(16 + images.rows() * images.cols());
    out.extend_from_slice(&IDX3_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.rows() as u32).to_be_bytes());
    out.extend_from_slice(&(img_rows as u32).to_be_bytes());
    out.extend_from_slice(&(img_cols as u32).to_be_bytes());
    out.extend(
        images
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

/// `N x K` one-hot matrix for the given labels.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(labels.len(), num_classes);
    for (row, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::InvalidLabel {
                row,
                label,
                classes: num_classes,
            });
        }
        m.set(row, label, 1.0);
    }
    Ok(m)
}

/// `K` Gaussian clusters with fixed centers in `[0,1]^d`, samples clamped
/// to `[0,1]`, classes interleaved row-wise. Deterministic per seed.
pub fn synthetic_blobs(
    rng: &mut Rng,
    n_per_class: usize,
    d: usize,
    num_classes: usize,
    spread: f64,
) -> Dataset {
    assert!(num_classes >= 2 && d >= 2, "blobs need K >= 2 and d >= 2");
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..d).map(|_| 0.15 + 0.7 * rng.next_f64()).collect())
        .collect();
    let n = n_per_class * num_classes;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % num_classes;
        for j in 0..d {
            let v = centers[k][j] + spread * rng.next_gaussian();
            data.push(v.clamp(0.0, 1.0));
        }
        labels.push(k);
    }
    Dataset {
        inputs: Matrix::from_vec(n, d, data).unwrap(),
        labels,
        num_classes,
    }
}
