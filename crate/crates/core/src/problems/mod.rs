//! Benchmark objectives: noisy quadratics, multinomial logistic regression and
//! a two-layer ReLU network, plus dataset ingestion.

mod idx;
mod models;
mod quadratic;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use idx::{load_idx, parse_idx, IdxTensor};
pub use models::{
    FiniteSumProblem, LogisticProblem, MlpProblem, Model, SoftmaxLinear, TwoLayerRelu,
};
pub use quadratic::{QuadraticProblem, MAX_QUADRATIC_DIM};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid problem parameter: {0}")]
    InvalidParameter(String),
    #[error("IDX format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("IDX payload truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("data file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub rows: usize,
    pub cols: usize,
    pub features: Vec<f64>,
    pub labels: Vec<u32>,
}

impl Split {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.cols..(i + 1) * self.cols]
    }

    pub fn max_row_norm_sq(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn take(&self, n: usize) -> Split {
        let n = n.min(self.rows);
        Split {
            rows: n,
            cols: self.cols,
            features: self.features[..n * self.cols].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub test: Split,
    pub classes: usize,
}

/// Per-coordinate standard deviation of the synthetic class blobs.
const BLOB_SPREAD: f64 = 0.3;

/// Gaussian class blobs in `[0, 1]^dim`, `n` training and `n` test examples.
///
/// Class means are drawn uniformly from `[0.2, 0.8]^dim`; each example gets a
/// uniformly random class and is clamped into the unit cube.
pub fn make_synthetic_classification(n: usize, dim: usize, classes: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let mut draw = |rows: usize| {
        let mut features = Vec::with_capacity(rows * dim);
        let mut labels = Vec::with_capacity(rows);
        for _ in 0..rows {
            let c = rng.random_range(0..classes);
            labels.push(c as u32);
            for mu in &means[c] {
                let z: f64 = rng.sample(StandardNormal);
                features.push((mu + BLOB_SPREAD * z).clamp(0.0, 1.0));
            }
        }
        Split { rows, cols: dim, features, labels }
    };
    let train = draw(n);
    let test = draw(n);
    Dataset { train, test, classes }
}

fn find_idx(dir: &Path, stem: &str) -> Result<PathBuf, ProblemError> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(ProblemError::Io {
        path: dir.join(stem),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file (also tried .gz)"),
    })
}

fn split_from_idx(images: IdxTensor, labels: IdxTensor, limit: usize) -> Result<Split, ProblemError> {
    if images.dims.len() < 2 || labels.dims.len() != 1 || images.dims[0] != labels.dims[0] {
        return Err(ProblemError::InvalidParameter(format!(
            "image tensor {:?} and label tensor {:?} do not pair up",
            images.dims, labels.dims
        )));
    }
    let rows = images.dims[0].min(limit);
    let cols: usize = images.dims[1..].iter().product();
    let features = images.data[..rows * cols].iter().map(|&p| p as f64 / 255.0).collect();
    let labels = labels.data[..rows].iter().map(|&l| l as u32).collect();
    Ok(Split { rows, cols, features, labels })
}

/// Loads the first `n_train` / `n_test` MNIST examples from the four standard
/// IDX files in `dir` (optionally gzip-compressed). Pixels are scaled to `[0, 1]`.
pub fn load_mnist(dir: &Path, n_train: usize, n_test: usize) -> Result<Dataset, ProblemError> {
    let train = split_from_idx(
        load_idx(&find_idx(dir, "train-images-idx3-ubyte")?)?,
        load_idx(&find_idx(dir, "train-labels-idx1-ubyte")?)?,
        n_train,
    )?;
    let test = split_from_idx(
        load_idx(&find_idx(dir, "t10k-images-idx3-ubyte")?)?,
        load_idx(&find_idx(dir, "t10k-labels-idx1-ubyte")?)?,
        n_test,
    )?;
    let classes = 10;
    if let Some(&bad) = train.labels.iter().chain(&test.labels).find(|&&l| l as usize >= classes) {
        return Err(ProblemError::InvalidParameter(format!("MNIST label {bad} outside 0..10")));
    }
    Ok(Dataset { train, test, classes })
}
