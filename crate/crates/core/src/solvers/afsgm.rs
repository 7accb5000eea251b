//! Adaptive similar-triangles method with a stochastic oracle.
//!
//! Each outer step searches for a local Lipschitz estimate by doubling,
//! starting from half the previous estimate. The step weights satisfy
//! `L_{k+1} α_{k+1}² = A_k + α_{k+1}`; the extrapolation point `y` and the new
//! iterate `x` are convex combinations of the dual sequence `u` and the
//! previous `x` with weights `α/A` and `A_prev/A`.
//!
//! Two variants share this skeleton:
//!
//! * [`step_theoretical`] draws a fresh mini-batch of size `⌈3σ²Ω̃α/ε⌉` for
//!   every trial and tests acceptance with exact function values plus the
//!   slack `3σ²Ω̃/(L m) + δ`.
//! * [`step_practical`] fixes `m = ⌈3σ₀²α̃/ε⌉` from the previous estimate `L_k`,
//!   draws the tokens once, re-evaluates batch means at each trial point with
//!   those same tokens, and uses batch values with slack `ε/(L α)`.

use log::warn;

use super::{alpha_next, batch_size_theoretical, ceil_snapped, Optimizer, SolverError, StepInfo};
use crate::oracle::{batch_value, minibatch, SampleStream, StochasticOracle, TokenRange};
use crate::vecspace::{kappa, omega_tilde, DenseVector, NormTag, ProxSetup};

pub const DEFAULT_MAX_INNER: u32 = 60;
pub const DEFAULT_MAX_BATCH: u64 = 1 << 16;

/// Iterate bundle `(x_k, y_k, u_k, A_k, L_k)` plus counters.
#[derive(Debug, Clone, PartialEq)]
pub struct AfsgmState {
    pub x: DenseVector,
    pub y: DenseVector,
    pub u: DenseVector,
    pub a: f64,
    pub l_cur: f64,
    pub k: u64,
    /// Trials used by the most recent step.
    pub inner_j: u32,
    pub cum_samples: u64,
}

impl AfsgmState {
    pub fn new(x0: DenseVector, l0: f64) -> Self {
        Self { y: x0.clone(), u: x0.clone(), x: x0, a: 0.0, l_cur: l0, k: 0, inner_j: 0, cum_samples: 0 }
    }
}

/// Inputs of the theoretical variant. `N` and `Ω` are derived by [`TheoreticalConfig::plan_horizon`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoreticalConfig {
    pub epsilon: f64,
    /// Confidence level β ∈ (0, 1).
    pub beta: f64,
    /// Global smoothness constant L of the oracle.
    pub l_declared: f64,
    /// Initial local estimate, `0 < L₀ ≤ L`.
    pub l0: f64,
    pub sigma_sq: f64,
    /// Diameter bound of the feasible set.
    pub r_q: f64,
    pub delta: f64,
    /// Dual norm the noise is measured in; fixes κ.
    pub norm: NormTag,
    pub max_inner: u32,
    pub max_batch: u64,
}

impl Default for TheoreticalConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.002,
            beta: 0.1,
            l_declared: 1.0,
            l0: 1.0,
            sigma_sq: 0.1,
            r_q: 1.0,
            delta: 0.0,
            norm: NormTag::L2,
            max_inner: DEFAULT_MAX_INNER,
            max_batch: DEFAULT_MAX_BATCH,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), SolverError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SolverError::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<(), SolverError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(SolverError::InvalidParameter(format!("{name} must be nonnegative and finite, got {v}")))
    }
}

impl TheoreticalConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        positive("epsilon", self.epsilon)?;
        positive("L", self.l_declared)?;
        positive("L0", self.l0)?;
        positive("R_Q", self.r_q)?;
        nonnegative("sigma_sq", self.sigma_sq)?;
        nonnegative("delta", self.delta)?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(SolverError::InvalidParameter(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.l0 > self.l_declared {
            return Err(SolverError::InvalidParameter(format!(
                "L0 = {} exceeds L = {}",
                self.l0, self.l_declared
            )));
        }
        if self.max_inner == 0 || self.max_batch == 0 {
            return Err(SolverError::InvalidParameter("max_inner and max_batch must be positive".into()));
        }
        Ok(())
    }

    /// `N = ⌈2√3 √L R_Q / √ε⌉` and `Ω = √(6 ln(N/β))`.
    pub fn plan_horizon(&self) -> Result<(u64, f64), SolverError> {
        self.validate()?;
        // 2√3·√L·R/√ε = √(12 L R² / ε); the squared form keeps exact cases exact.
        let n = ceil_snapped((12.0 * self.l_declared * self.r_q * self.r_q / self.epsilon).sqrt());
        let n = n.max(1.0) as u64;
        let ratio = n as f64 / self.beta;
        if ratio <= 1.0 {
            return Err(SolverError::InvalidParameter(format!("N/beta = {ratio} must exceed 1")));
        }
        Ok((n, (6.0 * ratio.ln()).sqrt()))
    }
}

/// A validated theoretical configuration with its derived constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoreticalPlan {
    pub cfg: TheoreticalConfig,
    pub horizon: u64,
    pub omega: f64,
    pub omega_tilde: f64,
}

impl TheoreticalPlan {
    pub fn new(cfg: TheoreticalConfig, dim: usize) -> Result<Self, SolverError> {
        let (horizon, omega) = cfg.plan_horizon()?;
        let k = kappa(cfg.norm, dim)?;
        Ok(Self { cfg, horizon, omega, omega_tilde: omega_tilde(k, omega) })
    }
}

/// Inputs of the practical variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PracticalConfig {
    pub epsilon: f64,
    pub l0: f64,
    pub sigma0_sq: f64,
    pub max_batch: u64,
    pub max_inner: u32,
    /// Skip the line search: every step uses `L₀` and is accepted on its first trial.
    pub fixed_lipschitz: bool,
}

impl Default for PracticalConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.002,
            l0: 1.0,
            sigma0_sq: 0.1,
            max_batch: DEFAULT_MAX_BATCH,
            max_inner: DEFAULT_MAX_INNER,
            fixed_lipschitz: false,
        }
    }
}

impl PracticalConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        positive("epsilon", self.epsilon)?;
        positive("L0", self.l0)?;
        positive("sigma0_sq", self.sigma0_sq)?;
        if self.max_inner == 0 || self.max_batch == 0 {
            return Err(SolverError::InvalidParameter("max_inner and max_batch must be positive".into()));
        }
        Ok(())
    }
}

/// Everything an accepted outer step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Index of the new iterate, `k + 1`.
    pub k: u64,
    pub alpha: f64,
    pub a_prev: f64,
    pub a_new: f64,
    /// Estimate carried into the step, `L_k`.
    pub l_prev: f64,
    /// Accepted estimate `L_{k+1}`.
    pub l_accepted: f64,
    pub trials: u32,
    /// Batch size of the accepted trial.
    pub m: u64,
    /// Component gradient evaluations over all trials.
    pub samples: u64,
    /// The batch-size formula exceeded the cap.
    pub capped: bool,
    pub x_prev: DenseVector,
    pub u_prev: DenseVector,
    /// Accepted extrapolation point `y_{k+1}`.
    pub y: DenseVector,
    /// Mini-batch gradient at `y_{k+1}`.
    pub grad_mean: DenseVector,
    /// Tokens used by each trial, in order.
    pub trial_tokens: Vec<TokenRange>,
    /// `rhs − lhs` of the accepted exit inequality.
    pub margin: f64,
}

struct Trial {
    alpha: f64,
    a_new: f64,
    y: DenseVector,
}

fn trial_point(state: &AfsgmState, l_trial: f64) -> Trial {
    let alpha = alpha_next(state.a, l_trial);
    let a_new = state.a + alpha;
    let y = DenseVector::combine(alpha / a_new, &state.u, state.a / a_new, &state.x);
    Trial { alpha, a_new, y }
}

fn l_for_trial(l_cur: f64, j: u32) -> f64 {
    l_cur * 2f64.powi(j as i32 - 1)
}

/// Floating-point allowance for the exit comparison. Without it a converged
/// iterate on a zero-slack test fails on rounding alone and `L` runs off.
fn rounding_slack(lhs: f64, rhs: f64) -> f64 {
    16.0 * f64::EPSILON * (lhs.abs() + rhs.abs())
}

fn cap_batch(m: u64, max_batch: u64) -> (u64, bool) {
    if m > max_batch {
        (max_batch, true)
    } else {
        (m, false)
    }
}

#[allow(clippy::too_many_arguments)]
fn commit(
    state: &mut AfsgmState,
    trial: Trial,
    x_new: DenseVector,
    u_new: DenseVector,
    l_trial: f64,
    trials: u32,
    m: u64,
    samples: u64,
    capped: bool,
    grad_mean: DenseVector,
    trial_tokens: Vec<TokenRange>,
    margin: f64,
) -> StepReport {
    let report = StepReport {
        k: state.k + 1,
        alpha: trial.alpha,
        a_prev: state.a,
        a_new: trial.a_new,
        l_prev: state.l_cur,
        l_accepted: l_trial,
        trials,
        m,
        samples,
        capped,
        x_prev: std::mem::replace(&mut state.x, x_new),
        u_prev: std::mem::replace(&mut state.u, u_new),
        y: trial.y.clone(),
        grad_mean,
        trial_tokens,
        margin,
    };
    state.y = trial.y;
    state.a = trial.a_new;
    state.l_cur = l_trial;
    state.k += 1;
    state.inner_j = trials;
    state.cum_samples += samples;
    report
}

/// One outer step of the theoretical variant. Requires the oracle's exact value channel.
pub fn step_theoretical(
    state: &mut AfsgmState,
    plan: &TheoreticalPlan,
    oracle: &(impl StochasticOracle + ?Sized),
    setup: &ProxSetup,
    stream: &mut SampleStream,
) -> Result<StepReport, SolverError> {
    let cfg = &plan.cfg;
    let exact = |p: &DenseVector| oracle.exact_value(p).ok_or(SolverError::ExactValueRequired);
    let mut samples = 0u64;
    let mut tokens_used = Vec::new();
    let mut last_margin = f64::NAN;
    let mut last_l = state.l_cur;
    for j in 0..cfg.max_inner {
        let l_trial = l_for_trial(state.l_cur, j);
        last_l = l_trial;
        let trial = trial_point(state, l_trial);
        let formula = batch_size_theoretical(cfg.sigma_sq, plan.omega_tilde, trial.alpha, cfg.epsilon);
        let (m, capped) = cap_batch(formula, cfg.max_batch);
        let tokens = stream.take(m);
        tokens_used.push(tokens);
        samples += m;
        let batch = minibatch(oracle, &trial.y, tokens)?;
        let u_new = setup.mirror_step_unchecked(&state.u, &batch.grad_mean, trial.alpha);
        let x_new = DenseVector::combine(trial.alpha / trial.a_new, &u_new, state.a / trial.a_new, &state.x);
        let step = x_new.sub(&trial.y);
        let dist = setup.norm(&step);
        let lhs = exact(&x_new)?;
        let rhs = exact(&trial.y)?
            + batch.grad_mean.dot(&step)
            + 0.5 * l_trial * dist * dist
            + 3.0 * cfg.sigma_sq * plan.omega_tilde / (l_trial * m as f64)
            + cfg.delta;
        last_margin = rhs - lhs;
        if lhs <= rhs + rounding_slack(lhs, rhs) {
            return Ok(commit(
                state, trial, x_new, u_new, l_trial, j + 1, m, samples, capped, batch.grad_mean, tokens_used,
                rhs - lhs,
            ));
        }
    }
    state.cum_samples += samples;
    Err(SolverError::Diverged { step: state.k + 1, trials: cfg.max_inner, last_l, last_margin })
}

/// One outer step of the practical variant.
pub fn step_practical(
    state: &mut AfsgmState,
    cfg: &PracticalConfig,
    oracle: &(impl StochasticOracle + ?Sized),
    setup: &ProxSetup,
    stream: &mut SampleStream,
) -> Result<StepReport, SolverError> {
    let alpha_tilde = alpha_next(state.a, state.l_cur);
    let formula = batch_size_theoretical(cfg.sigma0_sq, 1.0, alpha_tilde, cfg.epsilon);
    let (m, capped) = cap_batch(formula, cfg.max_batch);
    let tokens = stream.take(m);
    let mut samples = 0u64;
    let mut tokens_used = Vec::new();
    let mut last_margin = f64::NAN;
    let mut last_l = state.l_cur;
    for j in 0..cfg.max_inner {
        let l_trial = if cfg.fixed_lipschitz { state.l_cur } else { l_for_trial(state.l_cur, j) };
        last_l = l_trial;
        let trial = trial_point(state, l_trial);
        tokens_used.push(tokens);
        samples += m;
        let batch = minibatch(oracle, &trial.y, tokens)?;
        let u_new = setup.mirror_step_unchecked(&state.u, &batch.grad_mean, trial.alpha);
        let x_new = DenseVector::combine(trial.alpha / trial.a_new, &u_new, state.a / trial.a_new, &state.x);
        let step = x_new.sub(&trial.y);
        let dist = setup.norm(&step);
        let lhs = batch_value(oracle, &x_new, tokens)?;
        let rhs = batch.value_mean
            + batch.grad_mean.dot(&step)
            + 0.5 * l_trial * dist * dist
            + cfg.epsilon / (l_trial * trial.alpha);
        last_margin = rhs - lhs;
        if cfg.fixed_lipschitz || lhs <= rhs + rounding_slack(lhs, rhs) {
            return Ok(commit(
                state, trial, x_new, u_new, l_trial, j + 1, m, samples, capped, batch.grad_mean, tokens_used,
                rhs - lhs,
            ));
        }
    }
    state.cum_samples += samples;
    Err(SolverError::Diverged { step: state.k + 1, trials: cfg.max_inner, last_l, last_margin })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Theoretical(TheoreticalPlan),
    Practical(PracticalConfig),
}

/// Either AFSGM variant packaged as an [`Optimizer`].
#[derive(Debug, Clone)]
pub struct Afsgm {
    variant: Variant,
    setup: ProxSetup,
    state: AfsgmState,
    stream: SampleStream,
    warned_cap: bool,
}

impl Afsgm {
    pub fn practical(x0: DenseVector, cfg: PracticalConfig, setup: ProxSetup, stream: u64) -> Result<Self, SolverError> {
        cfg.validate()?;
        setup.check_feasible(&x0, true)?;
        Ok(Self {
            state: AfsgmState::new(x0, cfg.l0),
            variant: Variant::Practical(cfg),
            setup,
            stream: SampleStream::new(stream),
            warned_cap: false,
        })
    }

    pub fn theoretical(
        x0: DenseVector,
        cfg: TheoreticalConfig,
        setup: ProxSetup,
        stream: u64,
    ) -> Result<Self, SolverError> {
        setup.check_feasible(&x0, true)?;
        let plan = TheoreticalPlan::new(cfg, setup.dim)?;
        Ok(Self {
            state: AfsgmState::new(x0, cfg.l0),
            variant: Variant::Theoretical(plan),
            setup,
            stream: SampleStream::new(stream),
            warned_cap: false,
        })
    }

    pub fn state(&self) -> &AfsgmState {
        &self.state
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    /// Advances one outer step and returns the full step record.
    pub fn step_report(&mut self, oracle: &dyn StochasticOracle) -> Result<StepReport, SolverError> {
        let report = match &self.variant {
            Variant::Theoretical(plan) => {
                step_theoretical(&mut self.state, plan, oracle, &self.setup, &mut self.stream)?
            }
            Variant::Practical(cfg) => step_practical(&mut self.state, cfg, oracle, &self.setup, &mut self.stream)?,
        };
        if report.capped && !self.warned_cap {
            warn!("batch-size formula exceeded the cap at step {}; using m = {}", report.k, report.m);
            self.warned_cap = true;
        }
        Ok(report)
    }
}

impl Optimizer for Afsgm {
    fn name(&self) -> &'static str {
        match self.variant {
            Variant::Theoretical(_) => "afsgm-theoretical",
            Variant::Practical(_) => "afsgm-practical",
        }
    }

    fn step(&mut self, oracle: &dyn StochasticOracle) -> Result<StepInfo, SolverError> {
        let r = self.step_report(oracle)?;
        Ok(StepInfo { l_cur: r.l_accepted, m: r.m, trials: r.trials, samples: r.samples })
    }

    fn point(&self) -> &DenseVector {
        &self.state.x
    }

    fn iteration(&self) -> u64 {
        self.state.k
    }

    fn cum_samples(&self) -> u64 {
        self.state.cum_samples
    }

    fn exhausted(&self) -> bool {
        match self.variant {
            Variant::Theoretical(plan) => self.state.k >= plan.horizon,
            Variant::Practical(_) => false,
        }
    }
}
