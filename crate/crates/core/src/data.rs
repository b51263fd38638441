//! MNIST in the IDX format: parsing, normalization and batching.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IdxError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const N_CLASSES: usize = 10;

/// Unsigned-byte tensor read from an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            needed: at + 4,
            available: bytes.len(),
        })
}

/// Parses an in-memory IDX buffer whose magic must equal `expected`.
pub fn parse_idx(bytes: &[u8], expected: u32) -> Result<IdxTensor, IdxError> {
    let magic = be_u32(bytes, 0)?;
    if magic != expected {
        return Err(IdxError::Magic {
            found: magic,
            expected,
        });
    }
    let rank = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(rank);
    for d in 0..rank {
        dims.push(be_u32(bytes, 4 + 4 * d)? as usize);
    }
    let header = 4 + 4 * rank;
    let count: usize = dims.iter().product();
    let needed = header + count;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(IdxError::Dimensions(format!(
            "header declares {count} values but the payload holds {}",
            bytes.len() - header
        )));
    }
    Ok(IdxTensor {
        dims,
        data: bytes[header..].to_vec(),
    })
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = fs::read(path).map_err(io)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Reads an IDX file (optionally `.gz`) whose magic must equal `expected`.
pub fn load_idx(path: &Path, expected: u32) -> Result<IdxTensor> {
    let bytes = read_maybe_gz(path)?;
    parse_idx(&bytes, expected).map_err(|source| Error::Idx {
        path: path.to_path_buf(),
        source,
    })
}

/// Global min-max map of a byte onto `[-1, 1]`.
#[inline]
pub fn normalize_minmax(v: u8) -> f64 {
    2.0 * f64::from(v) / 255.0 - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Normalized images with labels in `0..10`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `784 x N`: one column per sample, so a sample is contiguous.
    pub images: DMatrix<f64>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl Dataset {
    pub fn from_idx(images: &IdxTensor, labels: &IdxTensor, split: Split) -> Result<Self> {
        let dims_err = |msg: String| Error::Idx {
            path: PathBuf::new(),
            source: IdxError::Dimensions(msg),
        };
        if images.dims.len() != 3 || labels.dims.len() != 1 {
            return Err(dims_err("expected a rank-3 image and rank-1 label tensor".into()));
        }
        let n = images.dims[0];
        if labels.dims[0] != n {
            return Err(dims_err(format!(
                "{n} images but {} labels",
                labels.dims[0]
            )));
        }
        if let Some(&bad) = labels.data.iter().find(|&&l| l as usize >= N_CLASSES) {
            return Err(dims_err(format!("label {bad} out of range")));
        }
        let pixels = images.dims[1] * images.dims[2];
        let images = DMatrix::from_fn(pixels, n, |j, i| normalize_minmax(images.data[i * pixels + j]));
        Ok(Self {
            images,
            labels: labels.data.clone(),
            split,
        })
    }

    /// Loads `{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]` from `dir`.
    pub fn load(dir: &Path, split: Split) -> Result<Self> {
        let find = |stem: &str| {
            let plain = dir.join(stem);
            if plain.exists() {
                plain
            } else {
                dir.join(format!("{stem}.gz"))
            }
        };
        let p = split.prefix();
        let images = load_idx(&find(&format!("{p}-images-idx3-ubyte")), IMAGE_MAGIC)?;
        let labels = load_idx(&find(&format!("{p}-labels-idx1-ubyte")), LABEL_MAGIC)?;
        Self::from_idx(&images, &labels, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.images.nrows()
    }

    pub fn input(&self, i: usize) -> DVector<f64> {
        self.images.column(i).clone_owned()
    }

    pub fn label(&self, i: usize) -> usize {
        usize::from(self.labels[i])
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images.columns(0, n).clone_owned(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    pub fn batches(&self, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Batch>> {
        Ok(batch_indices(self.len(), batch_size, seed, epoch)?
            .into_iter()
            .map(|idx| Batch::gather(self, idx))
            .collect())
    }
}

/// `+1` at the label, `-1` elsewhere.
pub fn signed_one_hot(label: usize, n_classes: usize) -> DVector<f64> {
    DVector::from_fn(n_classes, |i, _| if i == label { 1.0 } else { -1.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Positions of the samples in the dataset.
    pub indices: Vec<usize>,
    /// `B x 784`.
    pub inputs: DMatrix<f64>,
    /// `B x 10`, signed one-hot rows.
    pub targets: DMatrix<f64>,
}

impl Batch {
    fn gather(ds: &Dataset, indices: Vec<usize>) -> Self {
        let b = indices.len();
        let inputs = DMatrix::from_fn(b, ds.n_features(), |r, c| ds.images[(c, indices[r])]);
        let targets = DMatrix::from_fn(b, N_CLASSES, |r, c| {
            if c == ds.label(indices[r]) {
                1.0
            } else {
                -1.0
            }
        });
        Self {
            indices,
            inputs,
            targets,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Shuffled partition of `0..n` into batches; the order depends only on
/// `(seed, epoch)` and the last partial batch is kept.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 1 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
