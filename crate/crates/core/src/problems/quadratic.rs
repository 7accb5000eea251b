use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ProblemError;
use crate::oracle::{OracleMeta, SampleToken, StochasticOracle, TokenRange};
use crate::vecspace::{dot, DenseVector};

pub const MAX_QUADRATIC_DIM: usize = 512;

/// `f(x) = ½ xᵀMx − bᵀx` with additive Gaussian noise on both oracle channels.
///
/// Gradient samples are `Mx − b + η` with `η ~ N(0, noise_sigma²/dim · I)`, and
/// value samples are `f(x) + ζ` with `ζ ~ N(0, noise_sigma²/dim)`. The value
/// noise does not depend on the point, so batch value differences taken with
/// the same tokens are exact.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    dim: usize,
    /// Row-major symmetric PSD matrix.
    m: Vec<f64>,
    b: DenseVector,
    noise_sigma: f64,
    lambda_max: f64,
    lambda_min: f64,
    x_star: Option<DenseVector>,
}

impl QuadraticProblem {
    pub fn new(
        dim: usize,
        m: Vec<f64>,
        b: DenseVector,
        noise_sigma: f64,
    ) -> Result<Self, ProblemError> {
        if dim == 0 || dim > MAX_QUADRATIC_DIM {
            return Err(ProblemError::InvalidParameter(format!(
                "quadratic dimension {dim} outside 1..={MAX_QUADRATIC_DIM}"
            )));
        }
        if m.len() != dim * dim || b.dim() != dim {
            return Err(ProblemError::InvalidParameter(format!(
                "matrix has {} entries and b has {}, expected {}x{dim} and {dim}",
                m.len(),
                b.dim(),
                dim
            )));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(ProblemError::InvalidParameter(format!("noise_sigma = {noise_sigma}")));
        }
        let mat = DMatrix::from_row_slice(dim, dim, &m);
        let scale = mat.amax().max(1.0);
        for i in 0..dim {
            for j in 0..i {
                if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-12 * scale {
                    return Err(ProblemError::InvalidParameter(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let eig = mat.clone().symmetric_eigen();
        let lambda_max = eig.eigenvalues.max();
        let lambda_min = eig.eigenvalues.min();
        if lambda_min < -1e-10 * lambda_max.abs().max(1.0) || lambda_max <= 0.0 {
            return Err(ProblemError::InvalidParameter(format!(
                "matrix is not positive semidefinite (eigenvalues in [{lambda_min}, {lambda_max}])"
            )));
        }
        let x_star = if lambda_min > 1e-12 * lambda_max {
            mat.cholesky().map(|c| {
                let sol = c.solve(&DVector::from_column_slice(b.as_slice()));
                DenseVector::from_vec_unchecked(sol.iter().copied().collect())
            })
        } else {
            None
        };
        Ok(Self { dim, m, b, noise_sigma, lambda_max, lambda_min: lambda_min.max(0.0), x_star })
    }

    /// `f(x) = (scale/2)‖x − center‖²` up to a constant.
    pub fn isotropic(dim: usize, scale: f64, center: &DenseVector, noise_sigma: f64) -> Result<Self, ProblemError> {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = scale;
        }
        Self::new(dim, m, center.scaled(scale), noise_sigma)
    }

    /// Random rotation of a diagonal spectrum log-spaced over `[mu, lip]`, with a
    /// minimizer drawn uniformly from the unit ball's surface.
    pub fn random_strongly_convex(
        dim: usize,
        mu: f64,
        lip: f64,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self, ProblemError> {
        if !(mu > 0.0 && lip >= mu) {
            return Err(ProblemError::InvalidParameter(format!("need 0 < mu <= lip, got {mu}, {lip}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gauss = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = gauss.qr().q();
        let spectrum: Vec<f64> = (0..dim)
            .map(|i| {
                if dim == 1 {
                    lip
                } else {
                    let t = i as f64 / (dim - 1) as f64;
                    mu * (lip / mu).powf(t)
                }
            })
            .collect();
        let d = DMatrix::from_diagonal(&DVector::from_vec(spectrum));
        let mut mat = &q * d * q.transpose();
        mat = (&mat + mat.transpose()) * 0.5;
        let mut target: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dot(&target, &target).sqrt();
        target.iter_mut().for_each(|v| *v /= norm);
        let b = &mat * DVector::from_vec(target);
        let m: Vec<f64> = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| mat[(i, j)]).collect();
        Self::new(dim, m, DenseVector::from_vec_unchecked(b.iter().copied().collect()), noise_sigma)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn with_noise(mut self, noise_sigma: f64) -> Self {
        self.noise_sigma = noise_sigma;
        self
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// Analytic minimizer; `None` when `M` is singular.
    pub fn x_star(&self) -> Option<&DenseVector> {
        self.x_star.as_ref()
    }

    pub fn f_star(&self) -> Option<f64> {
        self.x_star.as_ref().map(|x| self.value(x))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mx = self.apply(x);
        0.5 * dot(x, &mx) - dot(self.b.as_slice(), x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.apply(x);
        for (gi, bi) in g.iter_mut().zip(self.b.iter()) {
            *gi -= bi;
        }
        g
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.m.chunks_exact(self.dim).map(|row| dot(row, x)).collect()
    }

    fn coord_std(&self) -> f64 {
        self.noise_sigma / (self.dim as f64).sqrt()
    }
}

impl StochasticOracle for QuadraticProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn meta(&self) -> OracleMeta {
        OracleMeta { delta: 0.0, lip: self.lambda_max, sigma_sq: 3.0 * self.noise_sigma * self.noise_sigma }
    }

    fn sample_into(&self, y: &[f64], token: SampleToken, grad: &mut [f64]) -> f64 {
        let g = self.gradient(y);
        let value = self.value(y);
        if self.noise_sigma == 0.0 {
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
            return value;
        }
        let s = self.coord_std();
        let mut rng = token.rng();
        let zeta: f64 = rng.sample(StandardNormal);
        for (a, b) in grad.iter_mut().zip(&g) {
            let eta: f64 = rng.sample(StandardNormal);
            *a += b + s * eta;
        }
        value + s * zeta
    }

    fn sample_value(&self, y: &[f64], token: SampleToken) -> f64 {
        let value = self.value(y);
        if self.noise_sigma == 0.0 {
            return value;
        }
        let zeta: f64 = token.rng().sample(StandardNormal);
        value + self.coord_std() * zeta
    }

    fn batch_sums(&self, y: &[f64], tokens: TokenRange, grad_sum: &mut [f64]) -> f64 {
        let g = self.gradient(y);
        let value = self.value(y);
        let n = tokens.len as f64;
        if self.noise_sigma == 0.0 {
            for (a, b) in grad_sum.iter_mut().zip(&g) {
                *a += n * b;
            }
            return n * value;
        }
        let s = self.coord_std();
        let mut noise = vec![0.0; self.dim];
        let mut zeta_sum = 0.0;
        for t in tokens.iter() {
            let mut rng = t.rng();
            zeta_sum += rng.sample::<f64, _>(StandardNormal);
            for e in noise.iter_mut() {
                *e += rng.sample::<f64, _>(StandardNormal);
            }
        }
        for ((a, b), e) in grad_sum.iter_mut().zip(&g).zip(&noise) {
            *a += n * b + s * e;
        }
        n * value + s * zeta_sum
    }

    fn batch_value_sum(&self, y: &[f64], tokens: TokenRange) -> f64 {
        let value = self.value(y);
        let n = tokens.len as f64;
        if self.noise_sigma == 0.0 {
            return n * value;
        }
        let zeta_sum: f64 = tokens.iter().map(|t| t.rng().sample::<f64, _>(StandardNormal)).sum();
        n * value + self.coord_std() * zeta_sum
    }

    fn exact_value(&self, x: &[f64]) -> Option<f64> {
        Some(self.value(x))
    }

    fn exact_gradient(&self, x: &[f64]) -> Option<DenseVector> {
        Some(DenseVector::from_vec_unchecked(self.gradient(x)))
    }
}
