//! Fixed-step baselines: Adam, AdaGrad and plain mini-batch SGD.

use super::{Optimizer, SolverError, StepInfo};
use crate::oracle::{minibatch, SampleStream, StochasticOracle};
use crate::vecspace::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub lr: f64,
    pub batch: u64,
    pub beta1: f64,
    pub beta2: f64,
    /// Adam denominator offset.
    pub eps_hat: f64,
    /// AdaGrad accumulator offset.
    pub eps_acc: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { lr: 0.001, batch: 128, beta1: 0.9, beta2: 0.999, eps_hat: 1e-8, eps_acc: 1e-10 }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.lr.is_finite() && self.lr > 0.0) || self.batch == 0 {
            return Err(SolverError::InvalidParameter(format!(
                "lr must be positive and batch at least 1 (lr = {}, batch = {})",
                self.lr, self.batch
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(SolverError::InvalidParameter("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if !(self.eps_hat >= 0.0 && self.eps_acc >= 0.0) {
            return Err(SolverError::InvalidParameter("eps_hat and eps_acc must be nonnegative".into()));
        }
        Ok(())
    }
}

struct Common {
    x: DenseVector,
    cfg: BaselineConfig,
    stream: SampleStream,
    k: u64,
    cum_samples: u64,
}

impl Common {
    fn new(x0: DenseVector, cfg: BaselineConfig, stream: u64) -> Result<Self, SolverError> {
        cfg.validate()?;
        Ok(Self { x: x0, cfg, stream: SampleStream::new(stream), k: 0, cum_samples: 0 })
    }

    fn gradient(&mut self, oracle: &dyn StochasticOracle) -> Result<DenseVector, SolverError> {
        let tokens = self.stream.take(self.cfg.batch);
        let b = minibatch(oracle, &self.x, tokens)?;
        self.k += 1;
        self.cum_samples += self.cfg.batch;
        Ok(b.grad_mean)
    }

    fn info(&self) -> StepInfo {
        StepInfo { l_cur: 0.0, m: self.cfg.batch, trials: 1, samples: self.cfg.batch }
    }
}

macro_rules! delegate_optimizer {
    ($ty:ty, $name:literal) => {
        impl Optimizer for $ty {
            fn name(&self) -> &'static str {
                $name
            }

            fn step(&mut self, oracle: &dyn StochasticOracle) -> Result<StepInfo, SolverError> {
                self.update(oracle)?;
                Ok(self.c.info())
            }

            fn point(&self) -> &DenseVector {
                &self.c.x
            }

            fn iteration(&self) -> u64 {
                self.c.k
            }

            fn cum_samples(&self) -> u64 {
                self.c.cum_samples
            }
        }
    };
}

/// Adam with bias-corrected first and second moments.
pub struct Adam {
    c: Common,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(x0: DenseVector, cfg: BaselineConfig, stream: u64) -> Result<Self, SolverError> {
        let n = x0.dim();
        Ok(Self { c: Common::new(x0, cfg, stream)?, m: vec![0.0; n], v: vec![0.0; n] })
    }

    fn update(&mut self, oracle: &dyn StochasticOracle) -> Result<(), SolverError> {
        let g = self.c.gradient(oracle)?;
        let BaselineConfig { lr, beta1, beta2, eps_hat, .. } = self.c.cfg;
        let t = self.c.k as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..g.dim() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            self.c.x[i] -= lr * m_hat / (v_hat.sqrt() + eps_hat);
        }
        Ok(())
    }
}

delegate_optimizer!(Adam, "adam");

/// AdaGrad with a per-coordinate squared-gradient accumulator.
pub struct AdaGrad {
    c: Common,
    acc: Vec<f64>,
}

impl AdaGrad {
    pub fn new(x0: DenseVector, cfg: BaselineConfig, stream: u64) -> Result<Self, SolverError> {
        let n = x0.dim();
        Ok(Self { c: Common::new(x0, cfg, stream)?, acc: vec![0.0; n] })
    }

    fn update(&mut self, oracle: &dyn StochasticOracle) -> Result<(), SolverError> {
        let g = self.c.gradient(oracle)?;
        let BaselineConfig { lr, eps_acc, .. } = self.c.cfg;
        for i in 0..g.dim() {
            self.acc[i] += g[i] * g[i];
            let denom = (self.acc[i] + eps_acc).sqrt();
            if denom > 0.0 {
                self.c.x[i] -= lr * g[i] / denom;
            }
        }
        Ok(())
    }
}

delegate_optimizer!(AdaGrad, "adagrad");

/// Mini-batch SGD with a constant step.
pub struct Sgd {
    c: Common,
}

impl Sgd {
    pub fn new(x0: DenseVector, cfg: BaselineConfig, stream: u64) -> Result<Self, SolverError> {
        Ok(Self { c: Common::new(x0, cfg, stream)? })
    }

    fn update(&mut self, oracle: &dyn StochasticOracle) -> Result<(), SolverError> {
        let g = self.c.gradient(oracle)?;
        self.c.x.axpy(-self.c.cfg.lr, &g);
        Ok(())
    }
}

delegate_optimizer!(Sgd, "sgd");

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{OracleMeta, SampleToken};

    /// Returns the same gradient everywhere.
    struct Constant(Vec<f64>);

    impl StochasticOracle for Constant {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn meta(&self) -> OracleMeta {
            OracleMeta { delta: 0.0, lip: 1.0, sigma_sq: 0.0 }
        }
        fn sample_into(&self, _y: &[f64], _t: SampleToken, g: &mut [f64]) -> f64 {
            for (a, b) in g.iter_mut().zip(&self.0) {
                *a += b;
            }
            0.0
        }
    }

    fn x0() -> DenseVector {
        DenseVector::from(vec![1.0, -2.0, 0.5])
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let o = Constant(vec![0.0; 3]);
        let mut adam = Adam::new(x0(), BaselineConfig::default(), 0).unwrap();
        let mut ada = AdaGrad::new(x0(), BaselineConfig::default(), 0).unwrap();
        for _ in 0..5 {
            adam.step(&o).unwrap();
            ada.step(&o).unwrap();
        }
        assert_eq!(adam.point(), &x0());
        assert_eq!(ada.point(), &x0());
    }

    #[test]
    fn first_adam_step_is_lr_times_sign() {
        let o = Constant(vec![3.0, -0.02, 7e-3]);
        let cfg = BaselineConfig::default();
        let mut adam = Adam::new(x0(), cfg, 0).unwrap();
        let info = adam.step(&o).unwrap();
        assert_eq!(info.m, 128);
        for i in 0..3 {
            let d = adam.point()[i] - x0()[i];
            assert!((d + cfg.lr * o.0[i].signum()).abs() <= cfg.lr * 1e-5, "{d}");
        }
    }

    #[test]
    fn adam_without_momentum_is_sign_sgd() {
        let cfg = BaselineConfig { beta1: 0.0, beta2: 0.0, ..Default::default() };
        let o = Constant(vec![0.5, -4.0, 1.0]);
        let mut adam = Adam::new(x0(), cfg, 0).unwrap();
        for step in 1..=4 {
            adam.step(&o).unwrap();
            for i in 0..3 {
                let expected = x0()[i] - step as f64 * cfg.lr * o.0[i].signum();
                assert!((adam.point()[i] - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn adagrad_second_step_shrinks_by_root_two() {
        let cfg = BaselineConfig { eps_acc: 0.0, ..Default::default() };
        let o = Constant(vec![2.0, -0.5, 1.0]);
        let mut ada = AdaGrad::new(x0(), cfg, 0).unwrap();
        ada.step(&o).unwrap();
        let p1 = ada.point().clone();
        ada.step(&o).unwrap();
        for i in 0..3 {
            let first = p1[i] - x0()[i];
            let second = ada.point()[i] - p1[i];
            assert!((first + cfg.lr * o.0[i].signum()).abs() < 1e-15);
            assert!((second - first / 2f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_and_sample_accounting() {
        let o = Constant(vec![1.0, 1.0, 1.0]);
        let cfg = BaselineConfig { lr: 0.1, batch: 4, ..Default::default() };
        let mut sgd = Sgd::new(x0(), cfg, 0).unwrap();
        sgd.step(&o).unwrap();
        sgd.step(&o).unwrap();
        assert_eq!(sgd.cum_samples(), 8);
        assert_eq!(sgd.iteration(), 2);
        assert!((sgd.point()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(Adam::new(x0(), BaselineConfig { batch: 0, ..Default::default() }, 0).is_err());
        assert!(Adam::new(x0(), BaselineConfig { beta1: 1.0, ..Default::default() }, 0).is_err());
    }
}
