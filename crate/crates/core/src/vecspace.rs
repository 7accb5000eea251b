//! Vector arithmetic and the prox geometry shared by every solver.
//!
//! A [`ProxSetup`] bundles the feasible set `Q`, the prox function `d` and the
//! norm it is 1-strongly convex for. Two geometries are provided:
//!
//! * [`Geometry::EuclideanFreeSpace`]: `Q = R^n`, `d(x) = ½‖x‖²`, so the Bregman
//!   divergence is `½‖x − y‖²` and the mirror step is a plain gradient step.
//! * [`Geometry::EntropySimplex`]: `Q` is the probability simplex and
//!   `d(x) = Σ xᵢ ln xᵢ`, giving the KL divergence and a multiplicative update.

use std::fmt;
use std::ops::{Deref, Index, IndexMut};

use thiserror::Error;

/// Sum-to-one tolerance for simplex points.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Floor applied to simplex coordinates before taking logarithms.
pub const ENTROPY_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index} is not finite ({value})")]
    NotFinite { index: usize, value: f64 },
    #[error("simplex coordinate {index} is negative ({value})")]
    Negative { index: usize, value: f64 },
    #[error("simplex coordinate {index} must be strictly positive for this argument")]
    NotInterior { index: usize },
    #[error("simplex point sums to {sum}, expected 1 within {SIMPLEX_TOL:e}")]
    NotNormalized { sum: f64 },
    #[error("dual norm exponent q = {0} is outside [2, ∞]")]
    InvalidExponent(f64),
    #[error("dimension must be at least {min}, got {got}")]
    DimensionTooSmall { min: usize, got: usize },
    #[error("step weight alpha = {0} must be finite and nonnegative")]
    InvalidAlpha(f64),
}

/// Dense real coordinate vector used for points and gradients alike.
#[derive(Clone, PartialEq, Default)]
pub struct DenseVector(Vec<f64>);

impl fmt::Debug for DenseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl DenseVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self(vec![value; dim])
    }

    /// Wraps `coords`, rejecting NaN and infinite entries.
    pub fn try_from_vec(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if let Some((index, &value)) = coords.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GeometryError::NotFinite { index, value });
        }
        Ok(Self(coords))
    }

    /// Wraps `coords` without the finiteness check. Used on hot paths whose
    /// inputs are already validated.
    pub fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_linf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        debug_assert_eq!(self.dim(), x.dim());
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += a * v;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `wa * a + wb * b`
    pub fn combine(wa: f64, a: &Self, wb: f64, b: &Self) -> Self {
        debug_assert_eq!(a.dim(), b.dim());
        Self(a.0.iter().zip(&b.0).map(|(x, y)| wa * x + wb * y).collect())
    }

    pub fn distance_l2(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }
}

impl From<Vec<f64>> for DenseVector {
    /// Panics on non-finite input; use [`DenseVector::try_from_vec`] for fallible construction.
    fn from(coords: Vec<f64>) -> Self {
        Self::try_from_vec(coords).expect("DenseVector entries must be finite")
    }
}

impl From<&[f64]> for DenseVector {
    fn from(coords: &[f64]) -> Self {
        coords.to_vec().into()
    }
}

impl Deref for DenseVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The dual norm an oracle's noise is measured in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormTag {
    L2,
    /// `ℓq` with `q ∈ [2, ∞]`; `f64::INFINITY` selects `ℓ∞`.
    Lq(f64),
}

impl NormTag {
    pub fn eval(&self, v: &[f64]) -> f64 {
        match *self {
            NormTag::L2 => dot(v, v).sqrt(),
            NormTag::Lq(q) if q.is_infinite() => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            NormTag::Lq(q) => v.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(1.0 / q),
        }
    }
}

/// Regularity constant of `(R^dim, ‖·‖*)`: 1 for ℓ2, `min(q − 1, 2 ln dim)` for ℓq.
pub fn kappa(norm: NormTag, dim: usize) -> Result<f64, GeometryError> {
    match norm {
        NormTag::L2 => Ok(1.0),
        NormTag::Lq(q) => {
            if q.is_nan() || q < 2.0 {
                return Err(GeometryError::InvalidExponent(q));
            }
            if dim < 2 {
                return Err(GeometryError::DimensionTooSmall { min: 2, got: dim });
            }
            Ok((q - 1.0).min(2.0 * (dim as f64).ln()))
        }
    }
}

/// Concentration factor `2κ + 4Ω√κ + 2Ω²` scaling the theoretical batch sizes.
pub fn omega_tilde(kappa: f64, omega: f64) -> f64 {
    2.0 * kappa + 4.0 * omega * kappa.sqrt() + 2.0 * omega * omega
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Geometry {
    EuclideanFreeSpace,
    EntropySimplex,
}

/// Feasible set, prox function and norm for one problem dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxSetup {
    pub geometry: Geometry,
    pub dim: usize,
}

impl ProxSetup {
    pub fn euclidean(dim: usize) -> Self {
        Self { geometry: Geometry::EuclideanFreeSpace, dim }
    }

    pub fn entropy_simplex(dim: usize) -> Self {
        Self { geometry: Geometry::EntropySimplex, dim }
    }

    /// Primal norm the prox function is 1-strongly convex for (ℓ2 or ℓ1).
    pub fn norm(&self, v: &[f64]) -> f64 {
        match self.geometry {
            Geometry::EuclideanFreeSpace => dot(v, v).sqrt(),
            Geometry::EntropySimplex => v.iter().map(|x| x.abs()).sum(),
        }
    }

    /// Dual of [`ProxSetup::norm`] (ℓ2 or ℓ∞).
    pub fn dual_norm(&self, v: &[f64]) -> f64 {
        match self.geometry {
            Geometry::EuclideanFreeSpace => dot(v, v).sqrt(),
            Geometry::EntropySimplex => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// Prox center: the origin, or the uniform distribution on the simplex.
    pub fn center(&self) -> DenseVector {
        match self.geometry {
            Geometry::EuclideanFreeSpace => DenseVector::zeros(self.dim),
            Geometry::EntropySimplex => DenseVector::filled(self.dim, 1.0 / self.dim as f64),
        }
    }

    /// Checks that `x` lies in `Q`. With `interior`, simplex points must be strictly positive.
    pub fn check_feasible(&self, x: &DenseVector, interior: bool) -> Result<(), GeometryError> {
        if x.dim() != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim, got: x.dim() });
        }
        if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GeometryError::NotFinite { index, value });
        }
        if self.geometry == Geometry::EntropySimplex {
            for (index, &value) in x.iter().enumerate() {
                if value < 0.0 {
                    return Err(GeometryError::Negative { index, value });
                }
                if interior && value <= 0.0 {
                    return Err(GeometryError::NotInterior { index });
                }
            }
            let sum: f64 = x.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(GeometryError::NotNormalized { sum });
            }
        }
        Ok(())
    }

    /// The prox function `d(x)`.
    pub fn prox_value(&self, x: &DenseVector) -> f64 {
        match self.geometry {
            Geometry::EuclideanFreeSpace => 0.5 * x.dot(x),
            Geometry::EntropySimplex => x.iter().map(|&v| xlogx(v)).sum(),
        }
    }

    /// Bregman divergence `V(x, y) = d(x) − d(y) − ⟨∇d(y), x − y⟩`.
    pub fn bregman(&self, x: &DenseVector, y: &DenseVector) -> Result<f64, GeometryError> {
        self.check_feasible(x, false)?;
        self.check_feasible(y, true)?;
        let v = match self.geometry {
            Geometry::EuclideanFreeSpace => {
                let d = x.distance_l2(y);
                0.5 * d * d
            }
            Geometry::EntropySimplex => x
                .iter()
                .zip(y.iter())
                .map(|(&xi, &yi)| {
                    let kl = if xi > 0.0 { xi * (xi / yi).ln() } else { 0.0 };
                    kl - xi + yi
                })
                .sum(),
        };
        Ok(v.max(0.0))
    }

    /// Minimizer over `Q` of `V(x, u) + α⟨g, x⟩`.
    pub fn mirror_step(
        &self,
        u: &DenseVector,
        g: &DenseVector,
        alpha: f64,
    ) -> Result<DenseVector, GeometryError> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(GeometryError::InvalidAlpha(alpha));
        }
        self.check_feasible(u, true)?;
        if g.dim() != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim, got: g.dim() });
        }
        Ok(self.mirror_step_unchecked(u, g, alpha))
    }

    /// [`ProxSetup::mirror_step`] without feasibility checks, for solver inner loops.
    pub fn mirror_step_unchecked(&self, u: &DenseVector, g: &DenseVector, alpha: f64) -> DenseVector {
        match self.geometry {
            Geometry::EuclideanFreeSpace => {
                DenseVector(u.iter().zip(g.iter()).map(|(ui, gi)| ui - alpha * gi).collect())
            }
            Geometry::EntropySimplex => {
                if alpha == 0.0 {
                    return u.clone();
                }
                let logits: Vec<f64> = u
                    .iter()
                    .zip(g.iter())
                    .map(|(&ui, &gi)| ui.max(ENTROPY_FLOOR).ln() - alpha * gi)
                    .collect();
                let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
                normalize(&mut w);
                for v in w.iter_mut() {
                    *v = v.max(ENTROPY_FLOOR);
                }
                normalize(&mut w);
                DenseVector(w)
            }
        }
    }
}

fn xlogx(v: f64) -> f64 {
    if v > 0.0 {
        v * v.ln()
    } else {
        0.0
    }
}

fn normalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= s;
    }
}
