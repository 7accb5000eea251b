//! Flat `key = value` configuration files.
//!
//! One setting per line, `#` starts a comment, nested options use dotted keys
//! (`solver.epsilon = 0.002`). Unknown keys are rejected so typos surface as
//! usage errors instead of silently running with defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use super::HarnessError;
use crate::bias_probe::{ProbeMode, DEFAULT_BOOTSTRAP};
use crate::solvers::{BaselineConfig, PracticalConfig};

/// Parses `key = value` lines into a map. Later duplicates are an error.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            HarnessError::Usage(format!("line {}: expected `key = value`, got `{}`", lineno + 1, raw.trim()))
        })?;
        let k = k.trim().to_string();
        if k.is_empty() {
            return Err(HarnessError::Usage(format!("line {}: empty key", lineno + 1)));
        }
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(HarnessError::Usage(format!("line {}: duplicate key `{k}`", lineno + 1)));
        }
    }
    Ok(out)
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, HarnessError> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| HarnessError::Usage(format!("cannot parse `{key} = {v}`"))),
        }
    }

    fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, HarnessError> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn finish(self) -> Result<(), HarnessError> {
        if let Some(k) = self.0.keys().next() {
            return Err(HarnessError::Usage(format!("unknown configuration key `{k}`")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Quadratic,
    Logistic,
    Mlp,
}

impl FromStr for ProblemKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "quadratic" => Ok(Self::Quadratic),
            "logistic" => Ok(Self::Logistic),
            "mlp" => Ok(Self::Mlp),
            _ => Err(HarnessError::Usage(format!("unknown problem `{s}`; valid: quadratic, logistic, mlp"))),
        }
    }
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Quadratic => "quadratic",
            Self::Logistic => "logistic",
            Self::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    AfsgmTheoretical,
    AfsgmPractical,
    Adam,
    AdaGrad,
    Sgd,
}

impl FromStr for SolverKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "afsgm-theoretical" => Ok(Self::AfsgmTheoretical),
            "afsgm-practical" => Ok(Self::AfsgmPractical),
            "adam" => Ok(Self::Adam),
            "adagrad" => Ok(Self::AdaGrad),
            "sgd" => Ok(Self::Sgd),
            _ => Err(HarnessError::Usage(format!(
                "unknown solver `{s}`; valid: afsgm-theoretical, afsgm-practical, adam, adagrad, sgd"
            ))),
        }
    }
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::AfsgmTheoretical => "afsgm-theoretical",
            Self::AfsgmPractical => "afsgm-practical",
            Self::Adam => "adam",
            Self::AdaGrad => "adagrad",
            Self::Sgd => "sgd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Mnist,
}

impl FromStr for DataSource {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            "mnist" => Ok(Self::Mnist),
            _ => Err(HarnessError::Usage(format!("unknown data source `{s}`; valid: synthetic, mnist"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSettings {
    pub dim: usize,
    pub mu: f64,
    pub lip: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSettings {
    pub source: DataSource,
    pub mnist_dir: Option<PathBuf>,
    /// Fall back to synthetic data when the MNIST files are missing.
    pub fallback_synthetic: bool,
    pub n_train: usize,
    pub n_test: usize,
    /// Synthetic feature dimension.
    pub dim: usize,
    pub classes: usize,
}

/// Solver settings. `None` fields are resolved from the problem at run time.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub practical: PracticalConfig,
    pub baseline: BaselineConfig,
    pub beta: f64,
    pub l_declared: Option<f64>,
    pub sigma_sq: Option<f64>,
    pub r_q: Option<f64>,
    pub delta: f64,
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub problem: ProblemKind,
    pub solver: SolverKind,
    pub iterations: u64,
    /// Stop once this many component gradients were spent; 0 disables.
    pub max_samples: u64,
    /// Sampling seed.
    pub seed: u64,
    /// Seed for problem generation and weight initialization.
    pub problem_seed: u64,
    /// Evaluate metrics every `stride` iterations; `None` uses the problem default.
    pub stride: Option<u64>,
    pub record_wall_time: bool,
    pub quadratic: QuadraticSettings,
    pub data: DataSettings,
    pub hidden: usize,
    pub solver_cfg: SolverSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            problem: ProblemKind::Quadratic,
            solver: SolverKind::AfsgmPractical,
            iterations: 100,
            max_samples: 0,
            seed: 1,
            problem_seed: 1,
            stride: None,
            record_wall_time: false,
            quadratic: QuadraticSettings { dim: 50, mu: 0.01, lip: 1.0, noise_sigma: 0.0 },
            data: DataSettings {
                source: DataSource::Synthetic,
                mnist_dir: None,
                fallback_synthetic: false,
                n_train: 1000,
                n_test: 1000,
                dim: 50,
                classes: 10,
            },
            hidden: 32,
            solver_cfg: SolverSettings {
                practical: PracticalConfig::default(),
                baseline: BaselineConfig::default(),
                beta: 0.1,
                l_declared: None,
                sigma_sq: None,
                r_q: None,
                delta: 0.0,
            },
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut f = Fields(parse_pairs(text)?);
        let d = RunConfig::default();
        let name: String = f.take_or("name", d.name.clone())?;
        if !valid_name(&name) {
            return Err(HarnessError::Usage(format!("run name `{name}` must be [A-Za-z0-9._-]+")));
        }
        let p = d.solver_cfg.practical;
        let b = d.solver_cfg.baseline;
        let cfg = RunConfig {
            name,
            problem: f.take_or("problem", d.problem)?,
            solver: f.take_or("solver", d.solver)?,
            iterations: f.take_or("iterations", d.iterations)?,
            max_samples: f.take_or("max_samples", d.max_samples)?,
            seed: f.take_or("seed", d.seed)?,
            problem_seed: f.take_or("problem.seed", d.problem_seed)?,
            stride: f.take("stride")?,
            record_wall_time: f.take_or("record_wall_time", d.record_wall_time)?,
            quadratic: QuadraticSettings {
                dim: f.take_or("quadratic.dim", d.quadratic.dim)?,
                mu: f.take_or("quadratic.mu", d.quadratic.mu)?,
                lip: f.take_or("quadratic.lip", d.quadratic.lip)?,
                noise_sigma: f.take_or("quadratic.noise_sigma", d.quadratic.noise_sigma)?,
            },
            data: DataSettings {
                source: f.take_or("data.source", d.data.source)?,
                mnist_dir: f.take::<String>("data.mnist_dir")?.map(PathBuf::from),
                fallback_synthetic: f.take_or("data.fallback_synthetic", d.data.fallback_synthetic)?,
                n_train: f.take_or("data.n_train", d.data.n_train)?,
                n_test: f.take_or("data.n_test", d.data.n_test)?,
                dim: f.take_or("data.dim", d.data.dim)?,
                classes: f.take_or("data.classes", d.data.classes)?,
            },
            hidden: f.take_or("mlp.hidden", d.hidden)?,
            solver_cfg: SolverSettings {
                practical: PracticalConfig {
                    epsilon: f.take_or("solver.epsilon", p.epsilon)?,
                    l0: f.take_or("solver.l0", p.l0)?,
                    sigma0_sq: f.take_or("solver.sigma0_sq", p.sigma0_sq)?,
                    max_batch: f.take_or("solver.max_batch", p.max_batch)?,
                    max_inner: f.take_or("solver.max_inner", p.max_inner)?,
                    fixed_lipschitz: f.take_or("solver.fixed_lipschitz", p.fixed_lipschitz)?,
                },
                baseline: BaselineConfig {
                    lr: f.take_or("solver.lr", b.lr)?,
                    batch: f.take_or("solver.batch", b.batch)?,
                    beta1: f.take_or("solver.beta1", b.beta1)?,
                    beta2: f.take_or("solver.beta2", b.beta2)?,
                    eps_hat: f.take_or("solver.eps_hat", b.eps_hat)?,
                    eps_acc: f.take_or("solver.eps_acc", b.eps_acc)?,
                },
                beta: f.take_or("solver.beta", d.solver_cfg.beta)?,
                l_declared: f.take("solver.l_declared")?,
                sigma_sq: f.take("solver.sigma_sq")?,
                r_q: f.take("solver.r_q")?,
                delta: f.take_or("solver.delta", d.solver_cfg.delta)?,
            },
        };
        f.finish()?;
        if cfg.iterations == 0 {
            return Err(HarnessError::Usage("iterations must be positive".into()));
        }
        if cfg.stride == Some(0) {
            return Err(HarnessError::Usage("stride must be positive".into()));
        }
        Ok(cfg)
    }

    /// Canonical text form; `RunConfig::parse(&cfg.to_text())` reproduces `cfg`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("name", self.name.clone());
        put("problem", self.problem.as_str().into());
        put("solver", self.solver.as_str().into());
        put("iterations", self.iterations.to_string());
        put("max_samples", self.max_samples.to_string());
        put("seed", self.seed.to_string());
        put("problem.seed", self.problem_seed.to_string());
        if let Some(st) = self.stride {
            put("stride", st.to_string());
        }
        put("record_wall_time", self.record_wall_time.to_string());
        put("quadratic.dim", self.quadratic.dim.to_string());
        put("quadratic.mu", self.quadratic.mu.to_string());
        put("quadratic.lip", self.quadratic.lip.to_string());
        put("quadratic.noise_sigma", self.quadratic.noise_sigma.to_string());
        put(
            "data.source",
            match self.data.source {
                DataSource::Synthetic => "synthetic".into(),
                DataSource::Mnist => "mnist".into(),
            },
        );
        if let Some(dir) = &self.data.mnist_dir {
            put("data.mnist_dir", dir.display().to_string());
        }
        put("data.fallback_synthetic", self.data.fallback_synthetic.to_string());
        put("data.n_train", self.data.n_train.to_string());
        put("data.n_test", self.data.n_test.to_string());
        put("data.dim", self.data.dim.to_string());
        put("data.classes", self.data.classes.to_string());
        put("mlp.hidden", self.hidden.to_string());
        let sc = &self.solver_cfg;
        put("solver.epsilon", sc.practical.epsilon.to_string());
        put("solver.l0", sc.practical.l0.to_string());
        put("solver.sigma0_sq", sc.practical.sigma0_sq.to_string());
        put("solver.max_batch", sc.practical.max_batch.to_string());
        put("solver.max_inner", sc.practical.max_inner.to_string());
        put("solver.fixed_lipschitz", sc.practical.fixed_lipschitz.to_string());
        put("solver.lr", sc.baseline.lr.to_string());
        put("solver.batch", sc.baseline.batch.to_string());
        put("solver.beta1", sc.baseline.beta1.to_string());
        put("solver.beta2", sc.baseline.beta2.to_string());
        put("solver.eps_hat", sc.baseline.eps_hat.to_string());
        put("solver.eps_acc", sc.baseline.eps_acc.to_string());
        put("solver.beta", sc.beta.to_string());
        for (k, v) in [("solver.l_declared", sc.l_declared), ("solver.sigma_sq", sc.sigma_sq), ("solver.r_q", sc.r_q)] {
            if let Some(v) = v {
                put(k, v.to_string());
            }
        }
        put("solver.delta", sc.delta.to_string());
        s
    }

    pub fn effective_stride(&self) -> u64 {
        self.stride.unwrap_or(match self.problem {
            ProblemKind::Mlp => 5,
            _ => 1,
        })
    }
}

/// Settings of the `probe` subcommand. The probed problem is an isotropic
/// quadratic `½‖x‖²` with Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRunConfig {
    pub mode: ProbeMode,
    pub trials: u64,
    pub dim: usize,
    pub noise_sigma: f64,
    pub m: u64,
    pub l_trial: f64,
    pub slack: f64,
    /// Probe point; a single value is broadcast to every coordinate.
    pub point: Vec<f64>,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for ProbeRunConfig {
    fn default() -> Self {
        Self {
            mode: ProbeMode::TheoreticalRule,
            trials: 20_000,
            dim: 2,
            noise_sigma: 1.0,
            m: 4,
            l_trial: 1.0,
            slack: 0.0,
            point: vec![1.0],
            bootstrap: DEFAULT_BOOTSTRAP,
            seed: 1,
        }
    }
}

impl ProbeRunConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut f = Fields(parse_pairs(text)?);
        let d = ProbeRunConfig::default();
        let mode = match f.0.remove("probe.mode") {
            None => d.mode,
            Some(s) => s.parse::<ProbeMode>().map_err(|e| HarnessError::Usage(e.to_string()))?,
        };
        let point = match f.0.remove("probe.point") {
            None => d.point.clone(),
            Some(s) => s
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| HarnessError::Usage(format!("cannot parse `probe.point = {s}`")))?,
        };
        let cfg = ProbeRunConfig {
            mode,
            trials: f.take_or("probe.trials", d.trials)?,
            dim: f.take_or("probe.dim", d.dim)?,
            noise_sigma: f.take_or("probe.noise_sigma", d.noise_sigma)?,
            m: f.take_or("probe.m", d.m)?,
            l_trial: f.take_or("probe.l_trial", d.l_trial)?,
            slack: f.take_or("probe.slack", d.slack)?,
            point,
            bootstrap: f.take_or("probe.bootstrap", d.bootstrap)?,
            seed: f.take_or("seed", d.seed)?,
        };
        f.finish()?;
        if cfg.point.len() != 1 && cfg.point.len() != cfg.dim {
            return Err(HarnessError::Usage(format!(
                "probe.point has {} values; give 1 or probe.dim = {}",
                cfg.point.len(),
                cfg.dim
            )));
        }
        Ok(cfg)
    }

    pub fn point_vector(&self) -> Vec<f64> {
        if self.point.len() == self.dim {
            self.point.clone()
        } else {
            vec![self.point[0]; self.dim]
        }
    }
}
