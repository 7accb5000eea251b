//! Adaptive fast stochastic gradient methods and baseline optimizers.
//!
//! Every optimizer implements [`Optimizer`], so the harness can drive them
//! uniformly and log one [`StepInfo`] per outer iteration.

mod afsgm;
mod baselines;

use thiserror::Error;

use crate::oracle::{OracleError, StochasticOracle};
use crate::vecspace::{DenseVector, GeometryError};

pub use afsgm::{
    step_practical, step_theoretical, Afsgm, AfsgmState, PracticalConfig, StepReport,
    TheoreticalConfig, TheoreticalPlan, Variant,
};
pub use baselines::{AdaGrad, Adam, BaselineConfig, Sgd};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "line search did not accept within {trials} trials at step {step} (last L = {last_l:e}, last margin = {last_margin:e})"
    )]
    Diverged { step: u64, trials: u32, last_l: f64, last_margin: f64 },
    #[error("the theoretical variant needs the oracle's exact value channel")]
    ExactValueRequired,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// What one outer iteration did, in harness terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Accepted Lipschitz estimate; 0 for methods without one.
    pub l_cur: f64,
    /// Batch size of the accepted trial.
    pub m: u64,
    pub trials: u32,
    /// Component gradient evaluations spent by this iteration.
    pub samples: u64,
}

pub trait Optimizer {
    fn name(&self) -> &'static str;

    fn step(&mut self, oracle: &dyn StochasticOracle) -> Result<StepInfo, SolverError>;

    /// Current iterate reported to the harness.
    fn point(&self) -> &DenseVector;

    fn iteration(&self) -> u64;

    fn cum_samples(&self) -> u64;

    /// True once the method has reached a built-in horizon.
    fn exhausted(&self) -> bool {
        false
    }
}

/// Positive root of `Lα² − α − A = 0`.
pub fn alpha_next(a: f64, l: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * a * l).sqrt()) / (2.0 * l)
}

/// `⌈x⌉`, except that values within a few ulps above an integer round down to
/// it. Formulas like `3 · 0.1 / 0.002` land a hair above the intended integer.
pub fn ceil_snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 8.0 * f64::EPSILON * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Batch size `⌈3σ²Ω̃α/ε⌉`, clamped below at 1.
pub fn batch_size_theoretical(sigma_sq: f64, omega_tilde: f64, alpha: f64, epsilon: f64) -> u64 {
    let raw = 3.0 * sigma_sq * omega_tilde * alpha / epsilon;
    let m = ceil_snapped(raw);
    if m.is_nan() || m < 1.0 {
        1
    } else if m >= u64::MAX as f64 {
        u64::MAX
    } else {
        m as u64
    }
}
