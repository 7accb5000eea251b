use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ProblemError, Split};
use crate::oracle::{OracleMeta, SampleToken, StochasticOracle};
use crate::vecspace::DenseVector;

/// A per-example classification loss with an exact gradient.
pub trait Model: Sync {
    fn param_count(&self) -> usize;

    fn features(&self) -> usize;

    fn classes(&self) -> usize;

    /// Loss on one example; when `grad` is given the example gradient is added into it.
    fn loss(&self, w: &[f64], x: &[f64], label: usize, grad: Option<&mut [f64]>) -> f64;

    fn logits(&self, w: &[f64], x: &[f64]) -> Vec<f64>;

    fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        let z = self.logits(w, x);
        let mut best = 0;
        for (c, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = c;
            }
        }
        best
    }
}

/// Softmax cross-entropy of `logits` against `label`; overwrites `logits` with `p − e_label`.
fn softmax_ce_in_place(logits: &mut [f64], label: usize) -> f64 {
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - top).exp();
        sum += *z;
    }
    // loss = logsumexp(z) − z_label = ln(sum) − (z_label − top)
    let loss = sum.ln() - logits[label].ln();
    for z in logits.iter_mut() {
        *z /= sum;
    }
    logits[label] -= 1.0;
    loss
}

/// Multinomial logistic regression. Weights are `classes × (features + 1)`,
/// row-major, with the bias in the last column of each row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SoftmaxLinear {
    pub features: usize,
    pub classes: usize,
}

impl Model for SoftmaxLinear {
    fn param_count(&self) -> usize {
        self.classes * (self.features + 1)
    }

    fn features(&self) -> usize {
        self.features
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn logits(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let cols = self.features + 1;
        w.chunks_exact(cols)
            .map(|row| row[..self.features].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + row[self.features])
            .collect()
    }

    fn loss(&self, w: &[f64], x: &[f64], label: usize, grad: Option<&mut [f64]>) -> f64 {
        let mut z = self.logits(w, x);
        let loss = softmax_ce_in_place(&mut z, label);
        if let Some(grad) = grad {
            let cols = self.features + 1;
            for (c, row) in grad.chunks_exact_mut(cols).enumerate() {
                let d = z[c];
                for (g, xi) in row[..self.features].iter_mut().zip(x) {
                    *g += d * xi;
                }
                row[self.features] += d;
            }
        }
        loss
    }
}

/// `input → affine → ReLU → affine → softmax` network.
///
/// Layout: first layer `hidden × (input + 1)`, then output layer
/// `classes × (hidden + 1)`, both row-major with trailing bias columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwoLayerRelu {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl TwoLayerRelu {
    fn split<'a>(&self, w: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        w.split_at((self.input + 1) * self.hidden)
    }

    fn hidden_pre(&self, w1: &[f64], x: &[f64]) -> Vec<f64> {
        w1.chunks_exact(self.input + 1)
            .map(|row| row[..self.input].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + row[self.input])
            .collect()
    }

    fn output(&self, w2: &[f64], h: &[f64]) -> Vec<f64> {
        w2.chunks_exact(self.hidden + 1)
            .map(|row| row[..self.hidden].iter().zip(h).map(|(a, b)| a * b).sum::<f64>() + row[self.hidden])
            .collect()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self, seed: u64) -> DenseVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = vec![0.0; self.param_count()];
        let (w1, w2) = w.split_at_mut((self.input + 1) * self.hidden);
        let a1 = (6.0 / (self.input + self.hidden) as f64).sqrt();
        for row in w1.chunks_exact_mut(self.input + 1) {
            for v in &mut row[..self.input] {
                *v = rng.random_range(-a1..a1);
            }
        }
        let a2 = (6.0 / (self.hidden + self.classes) as f64).sqrt();
        for row in w2.chunks_exact_mut(self.hidden + 1) {
            for v in &mut row[..self.hidden] {
                *v = rng.random_range(-a2..a2);
            }
        }
        DenseVector::from_vec_unchecked(w)
    }
}

impl Model for TwoLayerRelu {
    fn param_count(&self) -> usize {
        (self.input + 1) * self.hidden + (self.hidden + 1) * self.classes
    }

    fn features(&self) -> usize {
        self.input
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn logits(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let (w1, w2) = self.split(w);
        let h: Vec<f64> = self.hidden_pre(w1, x).into_iter().map(|a| a.max(0.0)).collect();
        self.output(w2, &h)
    }

    fn loss(&self, w: &[f64], x: &[f64], label: usize, grad: Option<&mut [f64]>) -> f64 {
        let (w1, w2) = self.split(w);
        let pre = self.hidden_pre(w1, x);
        let h: Vec<f64> = pre.iter().map(|a| a.max(0.0)).collect();
        let mut z = self.output(w2, &h);
        let loss = softmax_ce_in_place(&mut z, label);
        let Some(grad) = grad else {
            return loss;
        };
        let (g1, g2) = grad.split_at_mut((self.input + 1) * self.hidden);
        let mut dh = vec![0.0; self.hidden];
        for ((row_g, row_w), &dz) in g2
            .chunks_exact_mut(self.hidden + 1)
            .zip(w2.chunks_exact(self.hidden + 1))
            .zip(&z)
        {
            for k in 0..self.hidden {
                row_g[k] += dz * h[k];
                dh[k] += dz * row_w[k];
            }
            row_g[self.hidden] += dz;
        }
        for (k, row_g) in g1.chunks_exact_mut(self.input + 1).enumerate() {
            if pre[k] <= 0.0 {
                continue;
            }
            let da = dh[k];
            for (g, xi) in row_g[..self.input].iter_mut().zip(x) {
                *g += da * xi;
            }
            row_g[self.input] += da;
        }
        loss
    }
}

/// Empirical risk `(1/n) Σ loss_i(w)` over a training split. The stochastic
/// oracle draws one example index uniformly (with replacement) per token.
#[derive(Debug, Clone)]
pub struct FiniteSumProblem<M> {
    model: M,
    train: Split,
    meta: OracleMeta,
}

pub type LogisticProblem = FiniteSumProblem<SoftmaxLinear>;
pub type MlpProblem = FiniteSumProblem<TwoLayerRelu>;

fn check_split(train: &Split, features: usize, classes: usize) -> Result<(), ProblemError> {
    if train.rows == 0 {
        return Err(ProblemError::InvalidParameter("training split is empty".into()));
    }
    if train.cols != features {
        return Err(ProblemError::InvalidParameter(format!(
            "split has {} features, model expects {features}",
            train.cols
        )));
    }
    if let Some(&bad) = train.labels.iter().find(|&&l| l as usize >= classes) {
        return Err(ProblemError::InvalidParameter(format!("label {bad} outside 0..{classes}")));
    }
    Ok(())
}

impl LogisticProblem {
    /// Declares `L = ½ max‖[x; 1]‖²`, which bounds the per-example Hessian
    /// `(diag(p) − ppᵀ) ⊗ x̃x̃ᵀ`, and `σ² = 8 max‖[x; 1]‖²`, a bound on the
    /// squared deviation of any example gradient from the mean.
    pub fn logistic(train: Split, classes: usize) -> Result<Self, ProblemError> {
        let model = SoftmaxLinear { features: train.cols, classes };
        check_split(&train, model.features, classes)?;
        let r2 = train.max_row_norm_sq() + 1.0;
        let meta = OracleMeta { delta: 0.0, lip: 0.5 * r2, sigma_sq: 8.0 * r2 };
        Ok(Self { model, train, meta })
    }
}

impl MlpProblem {
    /// The network is not globally smooth; `L = 1` and `σ² = 1` are nominal
    /// declarations only.
    pub fn mlp(train: Split, hidden: usize, classes: usize) -> Result<Self, ProblemError> {
        if hidden == 0 {
            return Err(ProblemError::InvalidParameter("hidden size must be positive".into()));
        }
        let model = TwoLayerRelu { input: train.cols, hidden, classes };
        check_split(&train, model.input, classes)?;
        Ok(Self { model, train, meta: OracleMeta { delta: 0.0, lip: 1.0, sigma_sq: 1.0 } })
    }
}

impl<M: Model> FiniteSumProblem<M> {
    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn train(&self) -> &Split {
        &self.train
    }

    /// Loss and gradient of one training example.
    pub fn example_value_grad(&self, w: &[f64], index: usize) -> (f64, DenseVector) {
        let mut g = vec![0.0; self.model.param_count()];
        let v = self.model.loss(w, self.train.row(index), self.train.labels[index] as usize, Some(&mut g));
        (v, DenseVector::from_vec_unchecked(g))
    }

    /// Mean loss over `split`.
    pub fn mean_loss(&self, w: &[f64], split: &Split) -> f64 {
        let total: f64 = (0..split.rows)
            .map(|i| self.model.loss(w, split.row(i), split.labels[i] as usize, None))
            .sum();
        total / split.rows as f64
    }

    /// Fraction of `split` classified correctly.
    pub fn accuracy(&self, w: &[f64], split: &Split) -> f64 {
        let hits = (0..split.rows)
            .filter(|&i| self.model.predict(w, split.row(i)) == split.labels[i] as usize)
            .count();
        hits as f64 / split.rows as f64
    }

    fn draw_index(&self, token: SampleToken) -> usize {
        token.rng().random_range(0..self.train.rows)
    }
}

impl<M: Model> StochasticOracle for FiniteSumProblem<M> {
    fn dim(&self) -> usize {
        self.model.param_count()
    }

    fn meta(&self) -> OracleMeta {
        self.meta
    }

    fn sample_into(&self, y: &[f64], token: SampleToken, grad: &mut [f64]) -> f64 {
        let i = self.draw_index(token);
        self.model.loss(y, self.train.row(i), self.train.labels[i] as usize, Some(grad))
    }

    fn sample_value(&self, y: &[f64], token: SampleToken) -> f64 {
        let i = self.draw_index(token);
        self.model.loss(y, self.train.row(i), self.train.labels[i] as usize, None)
    }

    fn exact_value(&self, x: &[f64]) -> Option<f64> {
        Some(self.mean_loss(x, &self.train))
    }

    fn exact_gradient(&self, x: &[f64]) -> Option<DenseVector> {
        let mut g = vec![0.0; self.model.param_count()];
        for i in 0..self.train.rows {
            self.model.loss(x, self.train.row(i), self.train.labels[i] as usize, Some(&mut g));
        }
        let inv = 1.0 / self.train.rows as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        Some(DenseVector::from_vec_unchecked(g))
    }
}
