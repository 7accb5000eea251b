//! Stochastic first-order oracles and mini-batch estimation.
//!
//! Randomness is counter based: a [`SampleToken`] `(stream, index)` fully
//! determines the realized sample, so a batch can be replayed at a different
//! point with exactly the same draws and evaluated in parallel without any
//! dependence on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::vecspace::DenseVector;

/// Tokens per parallel work unit. Partial sums are reduced in chunk order.
const CHUNK: u64 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("point has dimension {got}, oracle expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mini-batch size must be at least 1")]
    EmptyBatch,
    #[error("oracle does not expose exact {0}")]
    ExactUnavailable(&'static str),
}

/// Declared `(δ, L, σ²)` constants of a stochastic oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMeta {
    /// Inexactness δ.
    pub delta: f64,
    /// Smoothness constant L.
    pub lip: f64,
    /// Sub-Gaussian variance proxy σ² of the gradient noise (an upper bound).
    pub sigma_sq: f64,
}

impl OracleMeta {
    pub fn is_valid(&self) -> bool {
        self.delta.is_finite()
            && self.delta >= 0.0
            && self.lip.is_finite()
            && self.lip > 0.0
            && self.sigma_sq.is_finite()
            && self.sigma_sq >= 0.0
    }
}

/// Identifies one realization of the oracle's random variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleToken {
    pub stream: u64,
    pub index: u64,
}

impl SampleToken {
    pub fn new(stream: u64, index: u64) -> Self {
        Self { stream, index }
    }

    /// Generator owned by this token: keyed by the stream, ChaCha stream id = index.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.stream);
        rng.set_stream(self.index);
        rng
    }
}

/// A contiguous run of token indices `start..start + len` on one stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TokenRange {
    pub stream: u64,
    pub start: u64,
    pub len: u64,
}

impl TokenRange {
    pub fn new(stream: u64, start: u64, len: u64) -> Self {
        Self { stream, start, len }
    }

    pub fn iter(&self) -> impl Iterator<Item = SampleToken> + '_ {
        (self.start..self.start + self.len).map(move |i| SampleToken::new(self.stream, i))
    }

    fn chunks(&self) -> Vec<TokenRange> {
        let mut out = Vec::with_capacity(self.len.div_ceil(CHUNK) as usize);
        let mut s = self.start;
        let end = self.start + self.len;
        while s < end {
            let len = CHUNK.min(end - s);
            out.push(TokenRange::new(self.stream, s, len));
            s += len;
        }
        out
    }
}

/// Hands out fresh, non-overlapping token ranges from one stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleStream {
    pub stream: u64,
    pub next: u64,
}

impl SampleStream {
    pub fn new(stream: u64) -> Self {
        Self { stream, next: 0 }
    }

    pub fn take(&mut self, m: u64) -> TokenRange {
        let r = TokenRange::new(self.stream, self.next, m);
        self.next += m;
        r
    }
}

/// A stochastic `(δ, L)`-oracle.
///
/// Implementations must be pure in `(point, token)`. Both the value and the
/// gradient sample are driven by the same token.
pub trait StochasticOracle: Sync {
    fn dim(&self) -> usize;

    fn meta(&self) -> OracleMeta;

    /// Adds the gradient sample for `token` at `y` into `grad` and returns the value sample.
    fn sample_into(&self, y: &[f64], token: SampleToken, grad: &mut [f64]) -> f64;

    /// Value sample only.
    fn sample_value(&self, y: &[f64], token: SampleToken) -> f64 {
        let mut scratch = vec![0.0; self.dim()];
        self.sample_into(y, token, &mut scratch)
    }

    /// Sum of value samples over `tokens`, adding the gradient samples into `grad_sum`.
    /// Summation runs in token order.
    fn batch_sums(&self, y: &[f64], tokens: TokenRange, grad_sum: &mut [f64]) -> f64 {
        tokens.iter().map(|t| self.sample_into(y, t, grad_sum)).sum()
    }

    fn batch_value_sum(&self, y: &[f64], tokens: TokenRange) -> f64 {
        tokens.iter().map(|t| self.sample_value(y, t)).sum()
    }

    /// Deterministic value `f_δ(x)`, when the oracle can provide it.
    fn exact_value(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Noise-free gradient `∇f_δ(x)`, when the oracle can provide it.
    fn exact_gradient(&self, _x: &[f64]) -> Option<DenseVector> {
        None
    }
}

fn check_dim(oracle: &(impl StochasticOracle + ?Sized), y: &DenseVector) -> Result<(), OracleError> {
    if y.dim() != oracle.dim() {
        return Err(OracleError::DimensionMismatch { expected: oracle.dim(), got: y.dim() });
    }
    Ok(())
}

/// One `(value, gradient)` sample at `y`.
pub fn sample<O: StochasticOracle + ?Sized>(
    oracle: &O,
    y: &DenseVector,
    token: SampleToken,
) -> Result<(f64, DenseVector), OracleError> {
    check_dim(oracle, y)?;
    let mut g = vec![0.0; oracle.dim()];
    let v = oracle.sample_into(y, token, &mut g);
    Ok((v, DenseVector::from_vec_unchecked(g)))
}

/// Mean of `m` samples drawn at one point with a recorded token range.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    pub point: DenseVector,
    pub size: u64,
    pub grad_mean: DenseVector,
    pub value_mean: f64,
    pub tokens: TokenRange,
}

/// Mini-batch mean of value and gradient samples over `tokens`.
///
/// Chunks are evaluated in parallel and reduced in a fixed order, so the
/// result is bitwise independent of the thread count.
pub fn minibatch<O: StochasticOracle + ?Sized>(
    oracle: &O,
    y: &DenseVector,
    tokens: TokenRange,
) -> Result<MiniBatch, OracleError> {
    check_dim(oracle, y)?;
    if tokens.len == 0 {
        return Err(OracleError::EmptyBatch);
    }
    let dim = oracle.dim();
    let chunks = tokens.chunks();
    let partials: Vec<(f64, Vec<f64>)> = if chunks.len() == 1 {
        let mut g = vec![0.0; dim];
        let v = oracle.batch_sums(y, chunks[0], &mut g);
        vec![(v, g)]
    } else {
        chunks
            .par_iter()
            .map(|c| {
                let mut g = vec![0.0; dim];
                let v = oracle.batch_sums(y, *c, &mut g);
                (v, g)
            })
            .collect()
    };
    let mut grad = vec![0.0; dim];
    let mut value = 0.0;
    for (v, g) in &partials {
        value += v;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let n = tokens.len as f64;
    for a in grad.iter_mut() {
        *a /= n;
    }
    Ok(MiniBatch {
        point: y.clone(),
        size: tokens.len,
        grad_mean: DenseVector::from_vec_unchecked(grad),
        value_mean: value / n,
        tokens,
    })
}

/// Mini-batch mean of value samples only.
pub fn batch_value<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &DenseVector,
    tokens: TokenRange,
) -> Result<f64, OracleError> {
    check_dim(oracle, x)?;
    if tokens.len == 0 {
        return Err(OracleError::EmptyBatch);
    }
    let chunks = tokens.chunks();
    let partials: Vec<f64> = if chunks.len() == 1 {
        vec![oracle.batch_value_sum(x, chunks[0])]
    } else {
        chunks.par_iter().map(|c| oracle.batch_value_sum(x, *c)).collect()
    };
    Ok(partials.iter().sum::<f64>() / tokens.len as f64)
}

/// Largest violations of the `(δ, L)` sandwich
/// `0 ≤ f(x) − f(y) − ⟨∇f(y), x − y⟩ ≤ (L/2)‖x − y‖² + δ` over a set of pairs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeltaLReport {
    pub pairs: usize,
    /// How far the residual dropped below zero, maximized over pairs.
    pub max_lower_violation: f64,
    /// How far the residual exceeded `(L/2)‖x − y‖² + δ`, maximized over pairs.
    pub max_upper_violation: f64,
    pub lower_violations: usize,
    pub upper_violations: usize,
}

impl DeltaLReport {
    pub fn is_clean(&self) -> bool {
        self.lower_violations == 0 && self.upper_violations == 0
    }
}

/// Checks the declared `(δ, L)` of `oracle` on every `(x, y)` pair using the
/// exact value and gradient channels, in the ℓ2 norm.
///
/// Rounding noise of order `1e-12` times the magnitudes involved is not
/// counted as a violation.
pub fn verify_delta_l<O: StochasticOracle + ?Sized>(
    oracle: &O,
    pairs: &[(DenseVector, DenseVector)],
) -> Result<DeltaLReport, OracleError> {
    let meta = oracle.meta();
    let mut report = DeltaLReport { pairs: pairs.len(), ..Default::default() };
    for (x, y) in pairs {
        check_dim(oracle, x)?;
        check_dim(oracle, y)?;
        let fx = oracle.exact_value(x).ok_or(OracleError::ExactUnavailable("value"))?;
        let fy = oracle.exact_value(y).ok_or(OracleError::ExactUnavailable("value"))?;
        let gy = oracle.exact_gradient(y).ok_or(OracleError::ExactUnavailable("gradient"))?;
        let diff = x.sub(y);
        let lin = gy.dot(&diff);
        let residual = fx - fy - lin;
        let quad = 0.5 * meta.lip * diff.dot(&diff) + meta.delta;
        let tol = 1e-12 * (1.0 + fx.abs() + fy.abs() + lin.abs() + quad);
        let lower = -residual;
        if lower > tol {
            report.lower_violations += 1;
            report.max_lower_violation = report.max_lower_violation.max(lower);
        }
        let upper = residual - quad;
        if upper > tol {
            report.upper_violations += 1;
            report.max_upper_violation = report.max_upper_violation.max(upper);
        }
    }
    Ok(report)
}
