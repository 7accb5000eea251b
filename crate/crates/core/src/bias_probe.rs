//! Measures the selection bias that the line search introduces into
//! mini-batch gradients.
//!
//! A mini-batch gradient is unbiased on its own, but conditioning on the exit
//! inequality accepting it is a rejection-sampling step, and the accepted
//! batches are no longer centred on the true gradient. [`conditional_bias`]
//! freezes one `(point, L_trial)` pair and estimates that conditional mean by
//! Monte Carlo. [`DiscrepancyLog`] tracks the trajectory-level error sum
//! `Σ α_{k+1} ⟨∇̃f(y_{k+1}) − ∇f(y_{k+1}), x_ref − u_k⟩` of a solver run.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::oracle::{batch_value, minibatch, OracleError, StochasticOracle, TokenRange};
use crate::solvers::{alpha_next, Afsgm, SolverError, StepReport};
use crate::vecspace::DenseVector;

pub const DEFAULT_BOOTSTRAP: usize = 1000;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("no trial was accepted out of {0}; the probe is degenerate")]
    Degenerate(u64),
    #[error("invalid probe parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown probe mode `{0}`; valid modes: theoretical, practical")]
    UnknownMode(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Which exit inequality decides acceptance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeMode {
    /// Exact function values on both sides.
    TheoreticalRule,
    /// Batch function values evaluated with the batch's own tokens.
    PracticalRule,
}

impl FromStr for ProbeMode {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self, ProbeError> {
        match s {
            "theoretical" => Ok(ProbeMode::TheoreticalRule),
            "practical" => Ok(ProbeMode::PracticalRule),
            other => Err(ProbeError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for ProbeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeMode::TheoreticalRule => "theoretical",
            ProbeMode::PracticalRule => "practical",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub trials: u64,
    /// Frozen iterate; the probe runs a first step from it, so `x = y = u = point`.
    pub point: DenseVector,
    pub m: u64,
    pub l_trial: f64,
    /// Extra right-hand-side term of the exit inequality. `f64::INFINITY` accepts everything.
    pub slack: f64,
    pub mode: ProbeMode,
    pub seed: u64,
    pub bootstrap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub trials: u64,
    pub accepted: u64,
    pub accept_rate: f64,
    pub exact_gradient: DenseVector,
    /// Mean of the accepted batch gradients.
    pub conditional_mean: DenseVector,
    pub bias_vector: DenseVector,
    pub bias_norm: f64,
    /// Per-coordinate standard error of the conditional mean.
    pub std_error: DenseVector,
    /// Bootstrap standard error of `bias_norm`.
    pub norm_std_error: f64,
    /// Bootstrap 95% percentile interval of each bias coordinate.
    pub bias_ci_low: DenseVector,
    pub bias_ci_high: DenseVector,
}

impl BiasReport {
    /// Largest `|bias_i| / se_i`; coordinates with zero spread count as infinite unless their bias is zero.
    pub fn max_z(&self) -> f64 {
        self.bias_vector
            .iter()
            .zip(self.std_error.iter())
            .map(|(&b, &s)| if b == 0.0 { 0.0 } else if s == 0.0 { f64::INFINITY } else { (b / s).abs() })
            .fold(0.0, f64::max)
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean gradient of the batches the exit inequality accepts at `(point, L_trial)`, minus the exact gradient.
pub fn conditional_bias<O: StochasticOracle + ?Sized>(
    cfg: &ProbeConfig,
    oracle: &O,
) -> Result<BiasReport, ProbeError> {
    if cfg.trials == 0 || cfg.m == 0 {
        return Err(ProbeError::InvalidParameter("trials and m must be positive".into()));
    }
    if !(cfg.l_trial.is_finite() && cfg.l_trial > 0.0) || cfg.slack.is_nan() {
        return Err(ProbeError::InvalidParameter(format!(
            "L_trial = {} and slack = {} are not usable",
            cfg.l_trial, cfg.slack
        )));
    }
    let exact_gradient = oracle
        .exact_gradient(&cfg.point)
        .ok_or(OracleError::ExactUnavailable("gradient"))?;
    let y = &cfg.point;
    let f_y = match cfg.mode {
        ProbeMode::TheoreticalRule => {
            Some(oracle.exact_value(y).ok_or(OracleError::ExactUnavailable("value"))?)
        }
        ProbeMode::PracticalRule => None,
    };
    // First step from A = 0: alpha = 1/L, y = u = point, x⁺ = u⁺ = y − αg.
    let alpha = alpha_next(0.0, cfg.l_trial);
    let outcomes: Vec<Result<Option<DenseVector>, OracleError>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let tokens = TokenRange::new(cfg.seed, t * cfg.m, cfg.m);
            let batch = minibatch(oracle, y, tokens)?;
            let mut x = y.clone();
            x.axpy(-alpha, &batch.grad_mean);
            let step = x.sub(y);
            let quad = 0.5 * cfg.l_trial * step.dot(&step);
            let lin = batch.grad_mean.dot(&step);
            let (lhs, base) = match f_y {
                Some(fy) => (oracle.exact_value(&x).unwrap_or(f64::NAN), fy),
                None => (batch_value(oracle, &x, tokens)?, batch.value_mean),
            };
            let accepted = lhs <= base + lin + quad + cfg.slack;
            Ok(accepted.then_some(batch.grad_mean))
        })
        .collect();
    let mut accepted_grads = Vec::new();
    for o in outcomes {
        if let Some(g) = o? {
            accepted_grads.push(g);
        }
    }
    let n = accepted_grads.len();
    if n == 0 {
        return Err(ProbeError::Degenerate(cfg.trials));
    }
    let dim = exact_gradient.dim();
    let mean = mean_of(&accepted_grads, dim);
    let mut var = vec![0.0; dim];
    for g in &accepted_grads {
        for i in 0..dim {
            let d = g[i] - mean[i];
            var[i] += d * d;
        }
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let std_error: Vec<f64> = var.iter().map(|v| (v / denom / n as f64).sqrt()).collect();
    let bias = mean.sub(&exact_gradient);

    let resamples = cfg.bootstrap.max(2);
    let boot: Vec<DenseVector> = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(b);
            let mut acc = vec![0.0; dim];
            for _ in 0..n {
                let g = &accepted_grads[rng.random_range(0..n)];
                for i in 0..dim {
                    acc[i] += g[i];
                }
            }
            DenseVector::from_vec_unchecked(
                acc.iter().zip(exact_gradient.iter()).map(|(a, e)| a / n as f64 - e).collect(),
            )
        })
        .collect();
    let norms: Vec<f64> = boot.iter().map(|b| b.norm_l2()).collect();
    let norm_mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let norm_std_error =
        (norms.iter().map(|v| (v - norm_mean).powi(2)).sum::<f64>() / (norms.len() - 1) as f64).sqrt();
    let mut low = Vec::with_capacity(dim);
    let mut high = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut col: Vec<f64> = boot.iter().map(|b| b[i]).collect();
        col.sort_by(f64::total_cmp);
        low.push(percentile(&col, 0.025));
        high.push(percentile(&col, 0.975));
    }

    Ok(BiasReport {
        trials: cfg.trials,
        accepted: n as u64,
        accept_rate: n as f64 / cfg.trials as f64,
        bias_norm: bias.norm_l2(),
        exact_gradient,
        conditional_mean: mean,
        bias_vector: bias,
        std_error: DenseVector::from_vec_unchecked(std_error),
        norm_std_error,
        bias_ci_low: DenseVector::from_vec_unchecked(low),
        bias_ci_high: DenseVector::from_vec_unchecked(high),
    })
}

fn mean_of(vs: &[DenseVector], dim: usize) -> DenseVector {
    let mut acc = vec![0.0; dim];
    for v in vs {
        for i in 0..dim {
            acc[i] += v[i];
        }
    }
    let n = vs.len() as f64;
    DenseVector::from_vec_unchecked(acc.into_iter().map(|a| a / n).collect())
}

/// Per-step terms `α_{k+1} ⟨∇̃f(y_{k+1}) − ∇f(y_{k+1}), x_ref − u_k⟩` and their running sum.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyLog {
    pub x_ref: DenseVector,
    pub terms: Vec<f64>,
    pub running: Vec<f64>,
    /// `A_{k+1}` after each logged step.
    pub a: Vec<f64>,
}

impl DiscrepancyLog {
    pub fn new(x_ref: DenseVector) -> Self {
        Self { x_ref, terms: Vec::new(), running: Vec::new(), a: Vec::new() }
    }

    /// Logs one accepted step and returns its term.
    pub fn observe<O: StochasticOracle + ?Sized>(
        &mut self,
        report: &StepReport,
        oracle: &O,
    ) -> Result<f64, OracleError> {
        let exact = oracle.exact_gradient(&report.y).ok_or(OracleError::ExactUnavailable("gradient"))?;
        let err = report.grad_mean.sub(&exact);
        let term = report.alpha * err.dot(&self.x_ref.sub(&report.u_prev));
        let prev = self.running.last().copied().unwrap_or(0.0);
        self.terms.push(term);
        self.running.push(prev + term);
        self.a.push(report.a_new);
        Ok(term)
    }

    pub fn sum(&self) -> f64 {
        self.running.last().copied().unwrap_or(0.0)
    }

    /// Running sum divided by `A_N`.
    pub fn normalized(&self) -> Vec<f64> {
        self.running.iter().zip(&self.a).map(|(s, a)| s / a).collect()
    }

    /// Bootstrap standard error of the total, resampling terms with replacement.
    pub fn bootstrap_se(&self, resamples: usize, seed: u64) -> f64 {
        let n = self.terms.len();
        if n < 2 || resamples < 2 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sums: Vec<f64> = (0..resamples)
            .map(|_| (0..n).map(|_| self.terms[rng.random_range(0..n)]).sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / resamples as f64;
        (sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt()
    }
}

/// Runs `steps` AFSGM iterations, logging each discrepancy term against `x_ref`.
pub fn track_discrepancy(
    solver: &mut Afsgm,
    oracle: &dyn StochasticOracle,
    steps: u64,
    x_ref: DenseVector,
) -> Result<(DiscrepancyLog, Vec<StepReport>), ProbeError> {
    let mut log = DiscrepancyLog::new(x_ref);
    let mut reports = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let r = solver.step_report(oracle)?;
        log.observe(&r, oracle)?;
        reports.push(r);
    }
    Ok((log, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticProblem;
    use crate::solvers::PracticalConfig;
    use crate::vecspace::ProxSetup;

    fn probe(noise: f64, slack: f64, l: f64, mode: ProbeMode) -> (QuadraticProblem, ProbeConfig) {
        let p = QuadraticProblem::isotropic(2, 1.0, &DenseVector::zeros(2), noise).unwrap();
        let cfg = ProbeConfig {
            trials: 2000,
            point: DenseVector::from(vec![1.0, 0.5]),
            m: 4,
            l_trial: l,
            slack,
            mode,
            seed: 5,
            bootstrap: 200,
        };
        (p, cfg)
    }

    #[test]
    fn noiseless_probe_has_no_bias() {
        for mode in [ProbeMode::TheoreticalRule, ProbeMode::PracticalRule] {
            let (p, cfg) = probe(0.0, 0.0, 1.0, mode);
            let r = conditional_bias(&cfg, &p).unwrap();
            assert_eq!(r.bias_norm, 0.0);
            assert!(r.accept_rate == 0.0 || r.accept_rate == 1.0);
        }
        let (p, cfg) = probe(0.0, 0.0, 0.5, ProbeMode::TheoreticalRule);
        assert!(matches!(conditional_bias(&cfg, &p), Err(ProbeError::Degenerate(2000))));
    }

    #[test]
    fn infinite_slack_accepts_everything_without_bias() {
        let (p, cfg) = probe(1.0, f64::INFINITY, 0.3, ProbeMode::PracticalRule);
        let r = conditional_bias(&cfg, &p).unwrap();
        assert_eq!(r.accept_rate, 1.0);
        assert!(r.max_z() <= 5.0, "{r:?}");
    }

    #[test]
    fn acceptance_is_monotone_in_l() {
        let mut last = 0.0;
        for l in [0.6, 0.8, 0.9, 1.0, 1.1, 1.3, 2.0, 4.0] {
            let (p, cfg) = probe(1.0, 0.01, l, ProbeMode::TheoreticalRule);
            let rate = conditional_bias(&cfg, &p).map(|r| r.accept_rate).unwrap_or(0.0);
            assert!(rate >= last, "rate {rate} at L = {l} below {last}");
            last = rate;
        }
        assert!(last > 0.9);
    }

    #[test]
    fn probe_is_reproducible() {
        let (p, cfg) = probe(1.0, 0.01, 1.0, ProbeMode::PracticalRule);
        assert_eq!(conditional_bias(&cfg, &p).unwrap(), conditional_bias(&cfg, &p).unwrap());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("practical".parse::<ProbeMode>().unwrap(), ProbeMode::PracticalRule);
        let e = "fancy".parse::<ProbeMode>().unwrap_err().to_string();
        assert!(e.contains("theoretical") && e.contains("practical"), "{e}");
    }

    #[test]
    fn noiseless_run_has_zero_discrepancy() {
        let p = QuadraticProblem::random_strongly_convex(5, 0.1, 2.0, 0.0, 1).unwrap();
        let mut s = Afsgm::practical(DenseVector::filled(5, 1.0), PracticalConfig::default(), ProxSetup::euclidean(5), 3)
            .unwrap();
        let (log, reports) = track_discrepancy(&mut s, &p, 30, p.x_star().unwrap().clone()).unwrap();
        assert_eq!(reports.len(), 30);
        for t in &log.terms {
            assert!(t.abs() <= 1e-12, "{t}");
        }
    }

    #[test]
    fn running_sum_matches_prefix_sums() {
        let p = QuadraticProblem::random_strongly_convex(5, 0.1, 2.0, 0.5, 1).unwrap();
        let mut s = Afsgm::practical(DenseVector::filled(5, 1.0), PracticalConfig::default(), ProxSetup::euclidean(5), 3)
            .unwrap();
        let (log, _) = track_discrepancy(&mut s, &p, 40, p.x_star().unwrap().clone()).unwrap();
        let mut acc = 0.0;
        for (t, r) in log.terms.iter().zip(&log.running) {
            acc += t;
            assert!((acc - r).abs() <= 1e-12 * acc.abs().max(1.0));
            assert!(t.is_finite());
        }
        let mut s2 = Afsgm::practical(DenseVector::filled(5, 1.0), PracticalConfig::default(), ProxSetup::euclidean(5), 3)
            .unwrap();
        let (again, _) = track_discrepancy(&mut s2, &p, 40, p.x_star().unwrap().clone()).unwrap();
        assert_eq!(log.sum().to_bits(), again.sum().to_bits());
    }
}
